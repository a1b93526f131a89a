"""Run-to-failure data: Pronostia ingestion, synthetic runs, sectioning, batching.

Sections follow the run length N: healthy ``[0, floor(0.10 N))``, slight
degradation ``[floor(0.10 N), floor(0.95 N))``, sharp degradation the rest.
Batches are stratified 20/70/10 over those sections with largest-remainder
rounding, and each run contributes in proportion to its section size.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dsp import (SAMPLE_RATE_HZ, SNAPSHOT_SAMPLES, NormStats, RawSnapshot, RunSeries, fit_normalization,
                  normalize, snapshots_to_run)
from .errors import DataError, IngestionError

HEALTHY, SLIGHT, SHARP = 0, 1, 2
SECTION_NAMES = ("healthy", "slight", "sharp")
SECTION_FRACTIONS = (0.20, 0.70, 0.10)
FILE_PERIOD_S = 10.0
SYNTH_TONE_FRACTION = 0.4  # of Nyquist
SYNTH_AMPLITUDE_RATIO = 20.0


@dataclass
class TrainBatch:
    values: np.ndarray
    timestamps: np.ndarray
    life_fraction: np.ndarray
    energy_norm: np.ndarray
    run_ids: np.ndarray
    run_index: np.ndarray
    frame_index: np.ndarray
    sections: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamps)


def condition_from_run_id(run_id: str, default: int = 1) -> int:
    m = re.match(r"Bearing(\d+)_\d+", run_id)
    return int(m.group(1)) if m else default


# --------------------------------------------------------------------------- Pronostia

def _parse_acc_file(path: Path) -> np.ndarray:
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    rows = [ln for ln in text.replace(";", ",").splitlines() if ln.strip()]
    if len(rows) != SNAPSHOT_SAMPLES:
        raise IngestionError(f"{path}: expected {SNAPSHOT_SAMPLES} rows, found {len(rows)}")
    try:
        arr = np.array([[float(c) for c in ln.split(",")] for ln in rows])
    except ValueError as exc:
        raise IngestionError(f"{path}: non-numeric cell ({exc})") from exc
    if arr.ndim != 2 or arr.shape[1] != 6:
        raise IngestionError(f"{path}: expected 6 columns per row")
    return arr


def load_pronostia_run(directory: str | Path) -> list[RawSnapshot]:
    """One snapshot per ``acc_*.csv`` file, timestamps at the 10 s file cadence.

    Columns are (hour, minute, second, microsecond, horizontal, vertical);
    ``temp_*.csv`` files are ignored.
    """
    directory = Path(directory)
    files = sorted(directory.glob("acc_*.csv"))
    if not files:
        raise DataError(f"{directory}: no acc_*.csv files")
    run_id = directory.name
    out = []
    for i, f in enumerate(files):
        arr = _parse_acc_file(f)
        out.append(RawSnapshot(run_id, i * FILE_PERIOD_S, arr[:, 4], arr[:, 5]))
    return out


def write_pronostia_run(snapshots: Sequence[RawSnapshot], directory: str | Path) -> None:
    """Write snapshots in the Pronostia CSV layout (full float precision)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(snapshots, start=1):
        t = s.timestamp_s + np.arange(len(s.horiz)) / s.sample_rate_hz
        hour = np.floor(t / 3600) % 24
        minute = np.floor(t / 60) % 60
        sec = np.floor(t) % 60
        usec = np.round((t - np.floor(t)) * 1e6)
        lines = [f"{int(h)},{int(m)},{int(sc)},{int(us)},{x!r},{y!r}"
                 for h, m, sc, us, x, y in zip(hour, minute, sec, usec, s.horiz.tolist(), s.vert.tolist())]
        (directory / f"acc_{i:05d}.csv").write_text("\n".join(lines) + "\n")


def find_pronostia_runs(root: str | Path) -> list[Path]:
    root = Path(root)
    return sorted(p for p in root.glob("Bearing*_*") if p.is_dir() and any(p.glob("acc_*.csv")))


# --------------------------------------------------------------------------- synthetic runs

def amplitude_profile(life: np.ndarray, profile: str) -> np.ndarray:
    """Relative fault-tone amplitude (1 at the start) versus life fraction."""
    life = np.asarray(life, dtype=np.float64)
    if profile == "flat":
        return np.ones_like(life)
    if profile == "degrading":
        # gentle growth to x4 at 95 % of life, then fast growth to the x20 end ratio
        slow = 4.0
        knee = 0.95
        return np.where(life <= knee,
                        slow ** (life / knee),
                        slow * (SYNTH_AMPLITUDE_RATIO / slow) ** ((life - knee) / (1 - knee)))
    raise DataError(f"unknown synthetic profile {profile!r}")


def generate_synthetic_run(seed: int, n_frames: int, profile: str = "degrading",
                           run_id: str = "Bearing1_1") -> list[RawSnapshot]:
    """White noise plus a fault tone at 40 % of Nyquist whose amplitude follows ``profile``."""
    if n_frames < 20:
        raise DataError("synthetic runs need at least 20 frames")
    rng = np.random.default_rng(seed)
    fs = SAMPLE_RATE_HZ
    t = np.arange(SNAPSHOT_SAMPLES) / fs
    tone_hz = SYNTH_TONE_FRACTION * fs / 2
    level = rng.uniform(0.8, 1.2)
    noise_std = 0.3 * level
    base_amp = 0.4 * level
    life = np.arange(n_frames) / (n_frames - 1)
    amp = base_amp * amplitude_profile(life, profile) * np.exp(0.05 * rng.standard_normal(n_frames))
    phase = rng.uniform(0, 2 * np.pi, n_frames)
    tone = amp[:, None] * np.sin(2 * np.pi * tone_hz * t[None, :] + phase[:, None])
    horiz = tone + noise_std * rng.standard_normal((n_frames, SNAPSHOT_SAMPLES))
    vert = 0.6 * tone + noise_std * rng.standard_normal((n_frames, SNAPSHOT_SAMPLES))
    return [RawSnapshot(run_id, i * FILE_PERIOD_S, horiz[i], vert[i]) for i in range(n_frames)]


def save_raw_store(snapshots: Sequence[RawSnapshot], path: str | Path) -> None:
    """Compact ``.npz`` store for synthetic runs (one file per run)."""
    np.savez(path, run_id=np.array(snapshots[0].run_id),
             timestamps=np.array([s.timestamp_s for s in snapshots]),
             horiz=np.stack([s.horiz for s in snapshots]),
             vert=np.stack([s.vert for s in snapshots]))


def load_raw_store(path: str | Path) -> list[RawSnapshot]:
    try:
        with np.load(path) as z:
            run_id = str(z["run_id"])
            return [RawSnapshot(run_id, float(ts), h, v)
                    for ts, h, v in zip(z["timestamps"], z["horiz"], z["vert"])]
    except (OSError, KeyError, ValueError) as exc:
        raise IngestionError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------- sectioning

def section_bounds(n: int) -> tuple[int, int]:
    if n < 20:
        raise DataError(f"runs need at least 20 frames to be sectioned, got {n}")
    return int(np.floor(0.10 * n)), int(np.floor(0.95 * n))


def section_labels(n: int) -> np.ndarray:
    h, s = section_bounds(n)
    labels = np.full(n, SLIGHT, dtype=np.int64)
    labels[:h] = HEALTHY
    labels[s:] = SHARP
    return labels


def section_run(run: RunSeries) -> RunSeries:
    """Validate sectioning for ``run`` and record bounds/labels in ``run.meta``."""
    bounds = section_bounds(len(run))
    run.meta["section_bounds"] = bounds
    run.meta["sections"] = section_labels(len(run))
    return run


# --------------------------------------------------------------------------- sampling

def largest_remainder(total: int, weights: Sequence[float]) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights`` (ties to lower index)."""
    w = np.asarray(weights, dtype=np.float64)
    if total == 0 or w.sum() <= 0:
        return np.zeros(len(w), dtype=np.int64)
    exact = total * w / w.sum()
    base = np.floor(exact + 1e-12).astype(np.int64)
    rem = exact - base
    short = total - int(base.sum())
    order = sorted(range(len(w)), key=lambda i: (-round(rem[i], 12), i))
    for i in order[:short]:
        base[i] += 1
    return base


def _apportion(quota: int, capacity: np.ndarray) -> np.ndarray:
    counts = np.minimum(largest_remainder(quota, capacity), capacity)
    while counts.sum() < quota:
        spare = capacity - counts
        counts[int(np.argmax(spare))] += 1
    return counts


def _apportion_sections(batch_size: int, capacity: np.ndarray) -> np.ndarray:
    """20/70/10 section quotas; a section too small to fill its share gives
    the shortfall to the others in proportion to their nominal fractions."""
    quotas = np.zeros(3, dtype=np.int64)
    open_ = np.ones(3, dtype=bool)
    remaining = batch_size
    while remaining > 0:
        w = np.where(open_, SECTION_FRACTIONS, 0.0)
        share = largest_remainder(remaining, w)
        take = np.minimum(share, capacity - quotas)
        quotas += take
        remaining -= int(take.sum())
        open_ &= quotas < capacity
        if not open_.any():
            break
    return quotas


def sample_batch(runs: Sequence[RunSeries], batch_size: int, rng: np.random.Generator,
                 pools: Sequence[np.ndarray] | None = None) -> TrainBatch:
    """Stratified batch: 20/70/10 healthy/slight/sharp, proportional per run.

    ``pools`` optionally restricts each run to a subset of frame indices
    (e.g. its training split). Sampling is without replacement.
    """
    if pools is None:
        pools = [np.arange(len(r)) for r in runs]
    pools = [np.asarray(p, dtype=np.int64) for p in pools]
    total = sum(len(p) for p in pools)
    if batch_size > total:
        raise DataError(f"batch_size {batch_size} exceeds the {total} pooled frames")
    labels = [section_labels(len(r)) for r in runs]
    by_section = [[np.sort(p[lab[p] == sec]) for p, lab in zip(pools, labels)] for sec in range(3)]
    sec_cap = np.array([sum(len(a) for a in by_section[sec]) for sec in range(3)], dtype=np.int64)
    for sec in range(3):
        if sec_cap[sec] == 0:
            raise DataError(f"section {SECTION_NAMES[sec]!r} has no frames in the pool")
    quotas = _apportion_sections(batch_size, sec_cap)
    run_idx, frame_idx, sec_idx = [], [], []
    for sec in range(3):
        cap = np.array([len(a) for a in by_section[sec]], dtype=np.int64)
        counts = _apportion(int(quotas[sec]), cap)
        for r, c in enumerate(counts):
            if c:
                picked = rng.choice(by_section[sec][r], size=int(c), replace=False)
                run_idx.extend([r] * int(c))
                frame_idx.extend(picked.tolist())
                sec_idx.extend([sec] * int(c))
    return gather_batch(runs, np.array(run_idx), np.array(frame_idx), np.array(sec_idx))


def gather_batch(runs: Sequence[RunSeries], run_index: np.ndarray, frame_index: np.ndarray,
                 sections: np.ndarray | None = None) -> TrainBatch:
    run_index = np.asarray(run_index, dtype=np.int64)
    frame_index = np.asarray(frame_index, dtype=np.int64)
    if sections is None:
        sections = np.array([section_labels(len(runs[r]))[f] if len(runs[r]) >= 20 else SLIGHT
                             for r, f in zip(run_index, frame_index)], dtype=np.int64)
    return TrainBatch(
        values=np.stack([runs[r].values[f] for r, f in zip(run_index, frame_index)]),
        timestamps=np.array([runs[r].timestamps[f] for r, f in zip(run_index, frame_index)]),
        life_fraction=np.array([runs[r].life_fraction[f] for r, f in zip(run_index, frame_index)]),
        energy_norm=np.array([runs[r].energy_norm[f] for r, f in zip(run_index, frame_index)]),
        run_ids=np.array([runs[r].run_id for r in run_index]),
        run_index=run_index, frame_index=frame_index, sections=np.asarray(sections, dtype=np.int64),
    )


def split_train_val(frames, fraction: float = 0.75, seed: int = 0):
    """Shuffled, disjoint, exhaustive split of ``frames`` into (train, val)."""
    n = len(frames)
    if n < 4:
        raise DataError("split_train_val needs at least 4 frames")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fraction * n))
    tr, va = perm[:n_train], perm[n_train:]
    if isinstance(frames, np.ndarray):
        return frames[tr], frames[va]
    return [frames[i] for i in tr], [frames[i] for i in va]


def split_runs(runs: Sequence[RunSeries], fraction: float = 0.75,
               seed: int = 0) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pool all frames of ``runs``, split them, and return per-run index arrays."""
    pairs = np.array([(r, i) for r, run in enumerate(runs) for i in range(len(run))], dtype=np.int64)
    train, val = split_train_val(pairs, fraction, seed)
    per_run = lambda sel: [np.sort(sel[sel[:, 0] == r, 1]) for r in range(len(runs))]
    return per_run(train), per_run(val)


# --------------------------------------------------------------------------- assembly

def prepare_runs(raw_runs: Sequence[Sequence[RawSnapshot]], condition_id: int,
                 stats: NormStats | None = None) -> tuple[list[RunSeries], NormStats]:
    """Log-mel transform and normalize whole runs.

    Statistics are fitted on ``raw_runs`` unless ``stats`` is given (test runs).
    """
    series = [section_run(snapshots_to_run(list(r), condition_id)) for r in raw_runs]
    if stats is None:
        stats = fit_normalization(series, condition_id)
    return [normalize(s, stats) for s in series], stats


def synthetic_runs(n_runs: int, n_frames: int, seed: int = 0, profile: str = "degrading",
                   condition_id: int = 1) -> list[list[RawSnapshot]]:
    """``n_runs`` synthetic raw runs named ``Bearing<cond>_<k>``."""
    return [generate_synthetic_run(seed * 1000 + k, n_frames, profile, f"Bearing{condition_id}_{k + 1}")
            for k in range(n_runs)]
