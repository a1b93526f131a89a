import math
from itertools import combinations

import numpy as np
import pytest

from cghi.metrics import (HISeries, aggregate, consistency, loess_smooth, read_hi_csv, read_report,
                          robustness, trendability, write_hi_csv, write_report)


def spearman_loops(v, t):
    """Pearson correlation of average ranks, computed with explicit loops."""
    def avg_ranks(x):
        return [sum(1 for y in x if y < xi) + (sum(1 for y in x if y == xi) + 1) / 2 for xi in x]
    rv, rt = avg_ranks(list(v)), avg_ranks(list(t))
    n = len(v)
    mv, mt = sum(rv) / n, sum(rt) / n
    cov = sum((a - mv) * (b - mt) for a, b in zip(rv, rt))
    return cov / math.sqrt(sum((a - mv) ** 2 for a in rv) * sum((b - mt) ** 2 for b in rt))


def test_trendability_examples():
    assert trendability(np.linspace(1, 0, 50)) == -1.0
    assert trendability(np.arange(10.0)) == 1.0
    assert trendability([1, 2, 4, 3], [1, 2, 3, 4]) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        trendability([1.0])


def test_trendability_matches_loops_without_ties():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.standard_normal(30)
        assert trendability(v) == pytest.approx(spearman_loops(v, np.arange(30)), abs=1e-12)


def test_trendability_rank_invariance():
    rng = np.random.default_rng(1)
    v, t = rng.standard_normal(40), np.sort(rng.uniform(size=40))
    assert trendability(np.exp(v), t ** 2) == trendability(v, t)


def test_loess_fixed_points():
    t = np.arange(60.0)
    np.testing.assert_allclose(loess_smooth(3 - 0.1 * t, 0.2), 3 - 0.1 * t, atol=1e-12)
    np.testing.assert_array_equal(loess_smooth(np.full(20, 2.5)), 2.5)


def test_loess_denoises_sine():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 2 * np.pi, 200)
    clean = np.sin(t)
    noisy = clean + 0.3 * rng.standard_normal(200)
    smooth = loess_smooth(noisy, 0.3, times=t)
    assert np.mean((smooth - clean) ** 2) < np.mean((noisy - clean) ** 2)


def test_loess_errors():
    with pytest.raises(ValueError):
        loess_smooth([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        loess_smooth(np.arange(10.0), span=0)


def test_robustness_examples():
    assert robustness(np.full(30, 0.4)) == 1.0
    v = np.array([1.0, 2.0, 3.0, 4.0])
    assert robustness(v, smoothed=np.array([0.9, 2.0, 3.0, 4.0])) == pytest.approx((math.exp(-0.1) + 3) / 4)
    rng = np.random.default_rng(3)
    r = robustness(rng.standard_normal(100))
    assert 0 < r <= 1


def test_robustness_scale_invariant():
    v = np.random.default_rng(4).uniform(0.5, 1.5, 80)
    assert robustness(-3 * v) == pytest.approx(robustness(v), rel=1e-12)


def test_consistency_identities():
    rng = np.random.default_rng(5)
    a = rng.standard_normal(200)
    assert consistency(a, a) == pytest.approx(1.0, abs=1e-12)
    b = rng.standard_normal(200)
    assert consistency(a, b) == consistency(b, a)
    assert consistency(np.ones(5), np.ones(5)) == 1.0
    assert consistency(np.ones(5), np.arange(5.0)) == 0.0
    with pytest.raises(ValueError):
        consistency(a, a[:-1])


def test_consistency_independent_noise_small():
    rng = np.random.default_rng(6)
    values = [consistency(rng.uniform(size=1000), rng.uniform(size=1000)) for _ in range(5)]
    assert max(values) < 0.15


def test_consistency_monotone_transform_beats_noise():
    rng = np.random.default_rng(7)
    a = rng.uniform(size=1000)
    assert consistency(a, np.exp(3 * a)) >= consistency(a, rng.uniform(size=1000))


def _series(seeds, n=40):
    out = []
    for s in seeds:
        rng = np.random.default_rng(s)
        for run in ("Bearing1_1", "Bearing1_2"):
            out.append(HISeries(run, s, np.linspace(1, 0, n) + 0.05 * rng.standard_normal(n), np.arange(n) * 10.0))
    return out


def test_aggregate_matches_recomputation():
    series = _series(range(10))
    rows = aggregate(series)
    assert [r.run_id for r in rows] == ["Bearing1_1", "Bearing1_2"]
    for row in rows:
        group = [s for s in series if s.run_id == row.run_id]
        tr = [trendability(s) for s in group]
        co = [consistency(a.values, b.values) for a, b in combinations(group, 2)]
        assert row.n_pairs == 45 and row.n_seeds == 10
        assert row.trend_mean == pytest.approx(np.mean(tr), abs=1e-15)
        assert row.trend_std == pytest.approx(np.std(tr), abs=1e-15)
        assert row.cons_mean == pytest.approx(np.mean(co), abs=1e-15)
        assert -1 <= row.trend_mean <= 1 and 0 <= row.cons_mean <= 1


def test_aggregate_identical_seeds_zero_std():
    base = _series([0])
    series = [HISeries(s.run_id, k, s.values, s.times) for k in range(3) for s in base]
    for row in aggregate(series):
        assert row.trend_std == 0 and row.robust_std == 0 and row.cons_std == 0


def test_aggregate_needs_two_seeds():
    with pytest.raises(ValueError):
        aggregate(_series([0]))


def test_hi_series_validation():
    with pytest.raises(ValueError):
        HISeries("r", 0, [1.0, 2.0], [1.0, 1.0])


def test_csv_round_trips(tmp_path):
    series = _series([0, 1])
    write_hi_csv(tmp_path / "hi.csv", series)
    back = read_hi_csv(tmp_path / "hi.csv")
    for a, b in zip(series, back):
        assert a.run_id == b.run_id and a.seed == b.seed
        np.testing.assert_array_equal(a.values, b.values)
    rows = aggregate(series)
    write_report(tmp_path / "m.csv", rows)
    assert read_report(tmp_path / "m.csv") == rows
