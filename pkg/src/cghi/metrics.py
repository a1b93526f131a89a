"""Trendability, robustness and consistency of HI curves, and their seed aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

ROBUST_FLOOR = 1e-6
DEFAULT_SPAN = 0.1
MIN_SPAN_POINTS = 5
N_BINS = 10


@dataclass
class HISeries:
    run_id: str
    seed: int
    values: np.ndarray
    times: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.values.shape != self.times.shape:
            raise ValueError(f"{self.run_id}: {self.values.shape} values vs {self.times.shape} times")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError(f"{self.run_id}: times must be strictly increasing")


@dataclass
class MetricRow:
    run_id: str
    trend_mean: float
    trend_std: float
    robust_mean: float
    robust_std: float
    cons_mean: float
    cons_std: float
    n_seeds: int
    n_pairs: int


REPORT_COLUMNS = ("bearing", "trendability_mean", "trendability_std", "robustness_mean",
                  "robustness_std", "consistency_mean", "consistency_std", "n_seeds", "n_pairs")


def _values_times(series, times=None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, HISeries):
        return series.values, series.times
    v = np.asarray(series, dtype=np.float64)
    t = np.arange(len(v), dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)
    return v, t


def trendability(series, times=None) -> float:
    """Spearman correlation between HI and time (average ranks on ties)."""
    v, t = _values_times(series, times)
    n = len(v)
    if n < 2:
        raise ValueError("trendability needs at least 2 points")
    rv, rt = rankdata(v), rankdata(t)
    if np.ptp(rv) == 0 or np.ptp(rt) == 0:
        return 0.0
    return float(1.0 - 6.0 * np.sum((rv - rt) ** 2) / (n * (n * n - 1)))


def loess_smooth(series, span: float = DEFAULT_SPAN, degree: int = 1, times=None,
                 min_points: int = MIN_SPAN_POINTS) -> np.ndarray:
    """Local weighted polynomial fit at each point with tricube weights (single pass)."""
    v, t = _values_times(series, times)
    n = len(v)
    if n < 4:
        raise ValueError("loess_smooth needs at least 4 points")
    if not 0 < span <= 1:
        raise ValueError("span must lie in (0, 1]")
    k = min(n, max(int(np.ceil(span * n)), min_points))
    if k < degree + 1:
        raise ValueError(f"span window of {k} points is too small for degree {degree}")
    out = np.empty(n)
    for i in range(n):
        dist = np.abs(t - t[i])
        idx = np.argsort(dist, kind="stable")[:k]
        h = dist[idx].max()
        w = (1 - (dist[idx] / h) ** 3) ** 3 if h > 0 else np.ones(k)
        # keep the farthest neighbour from vanishing entirely on tiny windows
        w = np.maximum(w, 1e-12)
        if degree == 1:
            # closed-form weighted line through the window, evaluated at t_i; working
            # relative to (t_i, v_i) keeps fixed points such as constants exact
            u, y = t[idx] - t[i], v[idx] - v[i]
            sw = w.sum()
            um, ym = np.dot(w, u) / sw, np.dot(w, y) / sw
            du = u - um
            sxx = np.dot(w, du * du)
            slope = np.dot(w, du * (y - ym)) / sxx if sxx > 0 else 0.0
            out[i] = v[i] + (ym - slope * um)
        else:
            X = np.vander(t[idx] - t[i], degree + 1, increasing=True)
            sq = np.sqrt(w)
            coef, *_ = np.linalg.lstsq(X * sq[:, None], v[idx] * sq, rcond=None)
            out[i] = coef[0]
    return out


def robustness(series, span: float = DEFAULT_SPAN, times=None, smoothed=None) -> float:
    """Mean of ``exp(-|(f - f_smooth) / f|)``; ``|f|`` is floored at 1e-6."""
    v, t = _values_times(series, times)
    fs = loess_smooth(v, span, times=t) if smoothed is None else np.asarray(smoothed, dtype=np.float64)
    denom = np.where(v < 0, -1.0, 1.0) * np.maximum(np.abs(v), ROBUST_FLOOR)
    return float(np.mean(np.exp(-np.abs((v - fs) / denom))))


def _entropy(counts: np.ndarray) -> float:
    # sorted so the sum does not depend on cell order (keeps Con(a, b) == Con(b, a) exact)
    p = np.sort(counts[counts > 0]) / counts.sum()
    return float(-np.sum(p * np.log(p)))


def _bin(x: np.ndarray, n_bins: int) -> np.ndarray:
    lo, hi = x.min(), x.max()
    return np.minimum(((x - lo) / (hi - lo) * n_bins).astype(np.int64), n_bins - 1)


def consistency(a, b, n_bins: int = N_BINS) -> float:
    """Symmetric uncertainty ``2 I(a, b) / (H(a) + H(b))`` from a joint histogram."""
    a, _ = _values_times(a)
    b, _ = _values_times(b)
    if a.shape != b.shape:
        raise ValueError(f"series lengths differ: {a.shape} vs {b.shape}")
    const_a, const_b = np.ptp(a) == 0, np.ptp(b) == 0
    if const_a and const_b:
        return 1.0
    if const_a or const_b:
        return 0.0
    ia, ib = _bin(a, n_bins), _bin(b, n_bins)
    joint = np.zeros((n_bins, n_bins))
    np.add.at(joint, (ia, ib), 1.0)
    ha, hb = _entropy(joint.sum(axis=1)), _entropy(joint.sum(axis=0))
    mi = ha + hb - _entropy(joint.ravel())
    return float(np.clip(2.0 * mi / (ha + hb), 0.0, 1.0))


def _mean_std(x: np.ndarray) -> tuple[float, float]:
    if np.all(x == x[0]):
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std())


def aggregate(series: Sequence[HISeries], span: float = DEFAULT_SPAN, n_bins: int = N_BINS) -> list[MetricRow]:
    """Per run: trendability/robustness mean and std over seeds, consistency over seed pairs."""
    by_run: dict[str, list[HISeries]] = {}
    for s in series:
        by_run.setdefault(s.run_id, []).append(s)
    rows = []
    for run_id in sorted(by_run):
        group = sorted(by_run[run_id], key=lambda s: s.seed)
        if len(group) < 2:
            raise ValueError(f"{run_id}: aggregation needs at least 2 seeds")
        tr = np.array([trendability(s) for s in group])
        ro = np.array([robustness(s, span) for s in group])
        co = np.array([consistency(a.values, b.values, n_bins) for a, b in combinations(group, 2)])
        rows.append(MetricRow(run_id, *_mean_std(tr), *_mean_std(ro), *_mean_std(co), len(group), len(co)))
    return rows


def write_report(path, rows: Sequence[MetricRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join([r.run_id] + [repr(x) for x in (r.trend_mean, r.trend_std, r.robust_mean,
                                                               r.robust_std, r.cons_mean, r.cons_std)]
                              + [str(r.n_seeds), str(r.n_pairs)]) + "\n")


def read_report(path) -> list[MetricRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header {header}")
        for line in fh:
            f = line.strip().split(",")
            rows.append(MetricRow(f[0], *map(float, f[1:7]), int(f[7]), int(f[8])))
    return rows


HI_COLUMNS = ("run_id", "seed", "timestamp", "hi")


def write_hi_csv(path, series: Sequence[HISeries]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(HI_COLUMNS) + "\n")
        for s in series:
            for t, v in zip(s.times, s.values):
                fh.write(f"{s.run_id},{s.seed},{float(t)!r},{float(v)!r}\n")


def read_hi_csv(path) -> list[HISeries]:
    groups: dict[tuple[str, int], tuple[list, list]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != HI_COLUMNS:
            raise ValueError(f"unexpected HI header {header}")
        for line in fh:
            run_id, seed, t, v = line.strip().split(",")
            ts, vs = groups.setdefault((run_id, int(seed)), ([], []))
            ts.append(float(t))
            vs.append(float(v))
    return [HISeries(r, s, np.array(vs), np.array(ts)) for (r, s), (ts, vs) in groups.items()]
