"""Independent brute-force oracles used by the property and acceptance tests."""

from itertools import combinations

import numpy as np


def _ordered_partitions(items):
    items = tuple(items)
    if not items:
        yield ()
        return
    for k in range(1, len(items) + 1):
        for first in combinations(items, k):
            rest = tuple(i for i in items if i not in first)
            for tail in _ordered_partitions(rest):
                yield (first,) + tail


def in_permutahedron(p, tol=1e-9) -> bool:
    n = len(p)
    top = np.cumsum(np.sort(p)[::-1])
    ref = np.cumsum(np.arange(n, 0, -1, dtype=float))
    return abs(top[-1] - ref[-1]) <= tol and bool(np.all(top <= ref + tol))


def permutahedron_projection(z) -> np.ndarray:
    """Exact Euclidean projection onto the permutahedron of (1..n) by face enumeration.

    Every face is an ordered set partition (B1, ..., Bk): the coordinates in B1
    hold the |B1| largest values, and so on. Projecting onto the affine hull of a
    face only shifts each block by a constant, so each candidate is closed-form;
    the nearest feasible candidate is the projection.
    """
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    values = np.arange(n, 0, -1, dtype=np.float64)
    best, best_d = None, np.inf
    for part in _ordered_partitions(range(n)):
        p = z.copy()
        start = 0
        for block in part:
            idx = list(block)
            target = values[start:start + len(idx)].sum()
            p[idx] += (target - z[idx].sum()) / len(idx)
            start += len(idx)
        if in_permutahedron(p):
            d = float(np.sum((p - z) ** 2))
            if d < best_d:
                best, best_d = p, d
    return best


def dir_mono_loops(hi, times):
    n = len(hi)
    out = []
    for i in range(n):
        r_hi = 1 + sum(1 for j in range(n) if hi[j] > hi[i] or (hi[j] == hi[i] and j < i))
        r_t = 1 + sum(1 for j in range(n) if times[j] < times[i] or (times[j] == times[i] and j < i))
        out.append(r_hi - r_t)
    return out


def dir_ene_cases(hi_t, hi_t0, e_t, e_t0, alpha, kappa):
    delta = kappa if kappa > abs(e_t - e_t0) else abs(e_t - e_t0)
    if hi_t > hi_t0 or hi_t == hi_t0:
        return 1
    if -alpha * delta <= hi_t - hi_t0 < 0:
        return 0
    return -1


def dir_bounds_cases(hi, life, ub, lb, a_pct, b_pct, b_a, b_b):
    up, low = [], []
    for h, lf in zip(hi, life):
        u = b_b if lf >= 1 - b_pct / 100 else ub
        lo = b_a if lf <= a_pct / 100 else lb
        up.append(1 if h > u else 0)
        low.append(-1 if h < lo else 0)
    return up, low
