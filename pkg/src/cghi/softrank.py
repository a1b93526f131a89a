"""Hard ranks and differentiable soft ranks via permutahedron projection.

The Euclidean projection of ``z`` onto the permutahedron of ``(1, ..., n)`` is
computed by sorting ``z`` in descending order, fitting a nonincreasing isotonic
regression to ``z_sorted - (n, ..., 1)`` with pool-adjacent-violators, and
subtracting the fit. The Jacobian is ``I`` minus block averaging over the PAV
blocks, so the backward pass only needs the block partition.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def rank_asc(x) -> np.ndarray:
    """1-based ascending ranks; ties broken by original index."""
    x = np.asarray(x, dtype=np.float64)
    ranks = np.empty(len(x), dtype=np.float64)
    ranks[np.argsort(x, kind="stable")] = np.arange(1, len(x) + 1)
    return ranks


def rank_desc(x) -> np.ndarray:
    """1-based descending ranks (largest value gets 1); ties broken by original index."""
    x = np.asarray(x, dtype=np.float64)
    ranks = np.empty(len(x), dtype=np.float64)
    ranks[np.argsort(-x, kind="stable")] = np.arange(1, len(x) + 1)
    return ranks


def isotonic_decreasing(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares nonincreasing fit of ``y`` by pool-adjacent-violators.

    Returns the fit and an integer block id per element.
    """
    n = len(y)
    sums: list[float] = []
    counts: list[int] = []
    for value in y:
        sums.append(float(value))
        counts.append(1)
        # merge while the newest block mean exceeds the previous one
        while len(sums) > 1 and sums[-1] * counts[-2] > sums[-2] * counts[-1]:
            s, c = sums.pop(), counts.pop()
            sums[-1] += s
            counts[-1] += c
    fit = np.empty(n)
    blocks = np.empty(n, dtype=np.int64)
    start = 0
    for b, (s, c) in enumerate(zip(sums, counts)):
        fit[start:start + c] = s / c
        blocks[start:start + c] = b
        start += c
    return fit, blocks


def project_permutahedron(z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project ``z`` onto the permutahedron of (1..n).

    Returns ``(p, order, blocks)`` where ``order`` sorts ``z`` descending and
    ``blocks`` are the PAV block ids in that sorted order.
    """
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    if n == 0:
        raise ValueError("cannot project an empty vector")
    order = np.argsort(-z, kind="stable")
    w = np.arange(n, 0, -1, dtype=np.float64)
    s = z[order]
    fit, blocks = isotonic_decreasing(s - w)
    p = np.empty(n)
    p[order] = s - fit
    return p, order, blocks


def _block_center(g_sorted: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    means = np.bincount(blocks, weights=g_sorted) / np.bincount(blocks)
    return g_sorted - means[blocks]


def soft_rank_with_vjp(x, eps: float = 1.0, descending: bool = False
                       ) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Soft ranks of ``x`` plus a vector-Jacobian product closure.

    Ascending (default): ``Proj(x / eps)``, smallest value -> 1 as eps -> 0.
    Descending: ``Proj(-x / eps)``, largest value -> 1.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=np.float64)
    sign = -1.0 if descending else 1.0
    p, order, blocks = project_permutahedron(sign * x / eps)

    def vjp(g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        out = np.empty(len(g))
        out[order] = _block_center(g[order], blocks)
        return sign * out / eps

    return p, vjp


def soft_rank(x, eps: float = 1.0, descending: bool = False) -> np.ndarray:
    return soft_rank_with_vjp(x, eps, descending)[0]


def soft_rank_loss(hi, times, eps: float = 1.0) -> tuple[float, np.ndarray]:
    """Squared distance between soft time ranks and soft HI ranks, with dL/dhi.

    Time is ranked ascending (earliest -> 1) and the HI descending (highest
    -> 1), the same pairing the monotonic direction uses, so the loss is
    minimized by an HI that decreases with time. The time side is constant.
    """
    hi = np.asarray(hi, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if hi.shape != times.shape:
        raise ValueError(f"hi and times must align, got {hi.shape} and {times.shape}")
    target = soft_rank(rank_asc(times), eps)
    pred, vjp = soft_rank_with_vjp(hi, eps, descending=True)
    diff = pred - target
    return 0.5 * float(diff @ diff), vjp(diff)
