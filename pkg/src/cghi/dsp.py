"""Log-mel preprocessing of two-axis accelerometer snapshots.

One snapshot (2560 samples per axis at 25.6 kHz) becomes one ``(128, 2)``
frame: Hann window over the whole snapshot, magnitude spectrum, 128 triangular
HTK-mel bands between 0 Hz and Nyquist, natural log with a 1e-10 floor.
Frames are then standardized per band and axis with statistics fitted on the
training runs of one operating condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import get_window

from .errors import ConfigError, DataError

SAMPLE_RATE_HZ = 25600
SNAPSHOT_SAMPLES = 2560
N_MELS = 128
LOG_FLOOR = 1e-10
EPS_STD = 1e-8


@dataclass
class RawSnapshot:
    run_id: str
    timestamp_s: float
    horiz: np.ndarray
    vert: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE_HZ

    def __post_init__(self) -> None:
        self.horiz = np.asarray(self.horiz, dtype=np.float64)
        self.vert = np.asarray(self.vert, dtype=np.float64)


@dataclass
class MelFrame:
    values: np.ndarray
    timestamp_s: float
    run_id: str
    condition_id: int = 1
    energy_norm: float = float("nan")
    life_fraction: float = float("nan")


@dataclass
class RunSeries:
    """Time-ordered frames of one run, stored as stacked arrays."""

    run_id: str
    condition_id: int
    values: np.ndarray
    timestamps: np.ndarray
    energy_norm: np.ndarray | None = None
    life_fraction: np.ndarray | None = None
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        n = len(self.timestamps)
        if self.values.shape[0] != n:
            raise DataError(f"run {self.run_id}: {self.values.shape[0]} frames but {n} timestamps")
        if n > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise DataError(f"run {self.run_id}: timestamps must be strictly increasing")
        if self.life_fraction is None:
            self.life_fraction = life_fractions(n)
        if self.energy_norm is None:
            self.energy_norm = np.full(n, np.nan)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def section_bounds(self) -> tuple[int, int]:
        n = len(self)
        return int(np.floor(0.10 * n)), int(np.floor(0.95 * n))

    def frame(self, i: int) -> MelFrame:
        return MelFrame(self.values[i], float(self.timestamps[i]), self.run_id, self.condition_id,
                        float(self.energy_norm[i]), float(self.life_fraction[i]))


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    energy_min: float
    energy_max: float
    condition_id: int

    def to_dict(self) -> dict:
        return {"condition_id": self.condition_id, "energy_min": self.energy_min,
                "energy_max": self.energy_max, "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64),
                   float(d["energy_min"]), float(d["energy_max"]), int(d["condition_id"]))


def life_fractions(n: int) -> np.ndarray:
    if n <= 1:
        return np.zeros(n)
    return np.arange(n) / (n - 1)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int = N_MELS, sample_rate: int = SAMPLE_RATE_HZ,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """The ``n_mels + 2`` corner frequencies (Hz); band k peaks at edge k+1."""
    fmax = sample_rate / 2 if fmax is None else fmax
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_center_frequencies(n_mels: int = N_MELS, sample_rate: int = SAMPLE_RATE_HZ) -> np.ndarray:
    return mel_band_edges(n_mels, sample_rate)[1:-1]


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = SNAPSHOT_SAMPLES,
                   sample_rate: int = SAMPLE_RATE_HZ, fmin: float = 0.0,
                   fmax: float | None = None) -> np.ndarray:
    """Triangular filters of shape ``(n_mels, n_fft // 2 + 1)``, unnormalized (peak 1)."""
    edges = mel_band_edges(n_mels, sample_rate, fmin, fmax)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


_FB_CACHE: dict[tuple, np.ndarray] = {}


def _filterbank_cached(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    key = (n_mels, n_fft, sample_rate)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = mel_filterbank(n_mels, n_fft, sample_rate)
    return _FB_CACHE[key]


def log_mel(signal: np.ndarray, sample_rate: int = SAMPLE_RATE_HZ, n_mels: int = N_MELS) -> np.ndarray:
    """Log-mel energies of one or more whole-snapshot signals; last axis is time."""
    signal = np.asarray(signal, dtype=np.float64)
    n = signal.shape[-1]
    window = get_window("hann", n)
    mag = np.abs(np.fft.rfft(signal * window, axis=-1))
    mel = mag @ _filterbank_cached(n_mels, n, sample_rate).T
    return np.log(np.maximum(mel, LOG_FLOOR))


def mel_spectrogram(snapshot: RawSnapshot, n_mels: int = N_MELS, condition_id: int = 1) -> MelFrame:
    for axis in (snapshot.horiz, snapshot.vert):
        if axis.shape != (SNAPSHOT_SAMPLES,):
            raise DataError(f"run {snapshot.run_id} @ {snapshot.timestamp_s}s: expected "
                            f"{SNAPSHOT_SAMPLES} samples per axis, got {axis.shape}")
    values = log_mel(np.stack([snapshot.horiz, snapshot.vert]), snapshot.sample_rate_hz, n_mels).T
    return MelFrame(values, float(snapshot.timestamp_s), snapshot.run_id, condition_id)


def snapshots_to_run(snapshots: list[RawSnapshot], condition_id: int, n_mels: int = N_MELS) -> RunSeries:
    """Vectorized :func:`mel_spectrogram` over a whole run."""
    if not snapshots:
        raise DataError("no snapshots")
    run_id = snapshots[0].run_id
    for s in snapshots:
        if s.horiz.shape != (SNAPSHOT_SAMPLES,) or s.vert.shape != (SNAPSHOT_SAMPLES,):
            raise DataError(f"run {s.run_id} @ {s.timestamp_s}s: expected {SNAPSHOT_SAMPLES} samples per axis")
    sig = np.stack([np.stack([s.horiz, s.vert]) for s in snapshots])  # (N, 2, 2560)
    values = log_mel(sig, snapshots[0].sample_rate_hz, n_mels).transpose(0, 2, 1)
    return RunSeries(run_id, condition_id, values, np.array([s.timestamp_s for s in snapshots]))


def frame_energy(frame) -> float:
    """Sum of squared elements of a frame."""
    values = frame.values if isinstance(frame, MelFrame) else np.asarray(frame)
    return float(np.sum(values * values))


def _stack_values(frames) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        return frames
    if isinstance(frames, RunSeries):
        return frames.values
    parts = [f.values if isinstance(f, RunSeries) else
             (f.values[None] if isinstance(f, MelFrame) else np.asarray(f)[None]) for f in frames]
    if not parts:
        raise DataError("cannot fit normalization on an empty frame set")
    return np.concatenate(parts, axis=0)


def fit_normalization(frames, condition_id: int) -> NormStats:
    """Per-band, per-axis mean/std plus energy range of the normalized frames.

    ``frames`` may be an ``(N, 128, 2)`` array, a RunSeries, or a list of
    RunSeries / MelFrames, all from the training runs of one condition.
    """
    values = _stack_values(frames)
    if values.shape[0] < 2:
        raise DataError("fit_normalization needs at least 2 frames")
    mean = values.mean(axis=0)
    std = np.maximum(values.std(axis=0), EPS_STD)
    z = (values - mean) / std
    energies = np.sum(z * z, axis=(1, 2))
    e_min, e_max = float(energies.min()), float(energies.max())
    if not e_max > e_min:
        e_max = e_min + 1.0
    return NormStats(mean, std, e_min, e_max, condition_id)


def _energy_norm(energy, stats: NormStats):
    return np.clip((energy - stats.energy_min) / (stats.energy_max - stats.energy_min), 0.0, 1.0)


def normalize(frame, stats: NormStats):
    """Standardize a MelFrame or RunSeries and attach its normalized energy."""
    if frame.condition_id != stats.condition_id:
        raise ConfigError(f"frame condition {frame.condition_id} does not match stats condition "
                          f"{stats.condition_id}")
    z = (frame.values - stats.mean) / stats.std
    if isinstance(frame, RunSeries):
        energy = np.sum(z * z, axis=(1, 2))
        return replace(frame, values=z, energy_norm=_energy_norm(energy, stats), normalized=True)
    return replace(frame, values=z, energy_norm=float(_energy_norm(frame_energy(z), stats)))


def denormalize(frame, stats: NormStats):
    values = frame.values * stats.std + stats.mean
    if isinstance(frame, RunSeries):
        return replace(frame, values=values, normalized=False)
    return replace(frame, values=values)


def trim_startup(run: RunSeries, trim_count: int) -> RunSeries:
    """Drop the first ``trim_count`` frames and recompute life fractions."""
    n = len(run)
    if trim_count < 0 or trim_count >= n:
        raise DataError(f"trim_count {trim_count} must be in [0, {n})")
    keep = slice(trim_count, None)
    return replace(run, values=run.values[keep], timestamps=run.timestamps[keep],
                   energy_norm=run.energy_norm[keep], life_fraction=life_fractions(n - trim_count))
