import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cghi.softrank import (isotonic_decreasing, project_permutahedron, rank_asc, rank_desc, soft_rank,
                           soft_rank_loss, soft_rank_with_vjp)
from gradcheck import numeric_grad, rel_err
from oracles import in_permutahedron, permutahedron_projection

floats = st.floats(-50, 50, allow_nan=False)


def test_hard_ranks():
    assert rank_asc([0.3, 0.1, 0.2]).tolist() == [3, 1, 2]
    assert rank_desc([0.3, 0.1, 0.2]).tolist() == [1, 3, 2]
    assert rank_asc([1, 1, 0]).tolist() == [2, 3, 1]


def test_pav_against_scipy():
    from scipy.optimize import isotonic_regression
    y = np.random.default_rng(0).standard_normal(30)
    fit, _ = isotonic_decreasing(y)
    np.testing.assert_allclose(fit, isotonic_regression(y, increasing=False).x, atol=1e-12)


@pytest.mark.parametrize("n", range(1, 6))
def test_projection_matches_face_enumeration(n):
    rng = np.random.default_rng(n)
    for _ in range(10):
        z = rng.normal(0, n, n)
        np.testing.assert_allclose(project_permutahedron(z)[0], permutahedron_projection(z), atol=1e-8)


def test_limits():
    np.testing.assert_allclose(soft_rank([0.1, 0.3, 0.2], eps=1e-6), [1, 3, 2], atol=1e-3)
    np.testing.assert_allclose(soft_rank([0.1, 0.3, 0.2], eps=1e9), [2, 2, 2], atol=1e-3)
    np.testing.assert_allclose(soft_rank([0.1, 0.3, 0.2], eps=1e-6, descending=True), [3, 1, 2], atol=1e-3)


def test_empty_raises():
    with pytest.raises(ValueError):
        soft_rank([])


@settings(max_examples=60, deadline=None)
@given(st.lists(floats, min_size=1, max_size=12), st.floats(0.01, 10))
def test_output_in_permutahedron_and_order_preserving(x, eps):
    x = np.array(x)
    r = soft_rank(x, eps)
    assert in_permutahedron(r, tol=1e-8)
    for i in range(len(x)):
        for j in range(len(x)):
            if x[i] < x[j]:
                assert r[i] <= r[j] + 1e-9


@pytest.mark.parametrize("descending", [False, True])
def test_vjp_finite_differences(descending):
    rng = np.random.default_rng(4)
    x = rng.standard_normal(7)
    g = rng.standard_normal(7)
    _, vjp = soft_rank_with_vjp(x, 0.7, descending)
    num = numeric_grad(lambda: float(soft_rank(x, 0.7, descending) @ g), x)
    assert rel_err(vjp(g), num) < 1e-4


def test_loss_zero_when_ranks_match():
    times = np.arange(6.0)
    # a strictly decreasing HI spaced like the ranks reproduces the time soft ranks
    hi = -np.arange(1.0, 7.0)
    loss, grad = soft_rank_loss(hi, times, 1.0)
    assert loss == pytest.approx(0.0, abs=1e-20)
    assert not grad.any()


def test_loss_gradient_finite_differences():
    rng = np.random.default_rng(5)
    hi = rng.standard_normal(5)
    times = rng.uniform(0, 1, 5)
    _, grad = soft_rank_loss(hi, times, 1.0)
    num = numeric_grad(lambda: soft_rank_loss(hi, times, 1.0)[0], hi)
    assert rel_err(grad, num) < 1e-4


def test_loss_permutation_invariant():
    rng = np.random.default_rng(6)
    hi, times = rng.standard_normal(8), rng.uniform(size=8)
    perm = rng.permutation(8)
    assert soft_rank_loss(hi[perm], times[perm])[0] == pytest.approx(soft_rank_loss(hi, times)[0], rel=1e-12)


def test_loss_length_mismatch():
    with pytest.raises(ValueError):
        soft_rank_loss([1.0, 2.0], [1.0])
