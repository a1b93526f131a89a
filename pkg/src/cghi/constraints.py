"""Constraint directions, rescale factors and the multi-head balancing factor.

Sign convention: for the energy and bound directions a positive value means
the HI estimate must decrease (the update subtracts ``dir * dHI/dtheta``). The
monotonic direction is a rank difference whose positive values mark samples
whose HI must rise, so it is negated when the update is assembled.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError
from .softrank import rank_asc, rank_desc, soft_rank, soft_rank_loss  # noqa: F401  (re-export)

FMH_FLOOR = 1e-8


@dataclass
class ConstraintConfig:
    alpha: float = 1.0
    kappa: float = 0.05
    ub: float = 1.0
    lb: float = 0.0
    a_pct: float = 10.0
    b_pct: float = 5.0
    b_a: float = 0.9
    b_b: float = 0.05
    R_mono_lw: float = 1.25
    R_mono_up: float = 1.5
    R_ene: float = 1.5
    R_upper: float = 2.0
    R_lower: float = 2.0
    epsilon_min: float = 0.01
    use_mono: bool = True
    use_ene: bool = True
    use_bounds: bool = True

    def validate(self) -> "ConstraintConfig":
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if not 0 < self.kappa < 1:
            raise ConfigError("kappa must lie in (0, 1)")
        for name in ("R_mono_lw", "R_mono_up", "R_ene", "R_upper", "R_lower"):
            if not getattr(self, name) > 1:
                raise ConfigError(f"rescale factor {name} must be strictly greater than 1")
        if self.R_mono_lw > self.R_mono_up:
            raise ConfigError("R_mono_lw must not exceed R_mono_up")
        if not self.lb < self.b_b < self.b_a < self.ub:
            raise ConfigError("bounds must satisfy lb < b_b < b_a < ub")
        if not 0 < self.epsilon_min < 1:
            raise ConfigError("epsilon_min must lie in (0, 1)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown constraint fields: {sorted(unknown)}")
        return cls(**d).validate()


RESCALE_SETS = {
    "RF_C1": dict(R_mono_lw=1.25, R_mono_up=1.5, R_ene=1.5, R_upper=2.0, R_lower=2.0),
    "RF_C2": dict(R_mono_lw=1.05, R_mono_up=1.25, R_ene=1.25, R_upper=1.25, R_lower=1.25),
}


@dataclass
class DirectionBatch:
    dir_mono: np.ndarray
    dir_ene: np.ndarray
    dir_upper: np.ndarray
    dir_lower: np.ndarray
    R_mono_t: np.ndarray


def dir_mono(hi, times) -> np.ndarray:
    """Descending HI rank minus ascending time rank, per sample."""
    hi = np.asarray(hi, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if hi.shape != times.shape:
        raise ValueError(f"hi and times must align, got {hi.shape} and {times.shape}")
    if len(hi) < 2:
        raise ValueError("dir_mono needs at least 2 samples")
    return rank_desc(hi) - rank_asc(times)


def dir_ene(hi_t: float, hi_t0: float, e_t: float, e_t0: float, alpha: float, kappa: float) -> int:
    """Energy-HI consistency direction of a later sample against its reference."""
    delta = max(kappa, abs(e_t - e_t0))
    diff = hi_t - hi_t0
    # equal HI already breaks the strict "later is lower" requirement, so it counts as too high
    if diff >= 0:
        return 1
    if diff >= -alpha * delta:
        return 0
    return -1


def energy_reference_index(run_ids, times) -> np.ndarray:
    """Index of the time-previous sample of the same run in the batch, or -1."""
    run_ids = np.asarray(run_ids)
    times = np.asarray(times, dtype=np.float64)
    ref = np.full(len(times), -1, dtype=np.int64)
    for rid in np.unique(run_ids):
        idx = np.flatnonzero(run_ids == rid)
        idx = idx[np.argsort(times[idx], kind="stable")]
        ref[idx[1:]] = idx[:-1]
    return ref


def dir_ene_batch(hi, energy, run_ids, times, alpha: float, kappa: float) -> np.ndarray:
    hi = np.asarray(hi, dtype=np.float64)
    energy = np.asarray(energy, dtype=np.float64)
    ref = energy_reference_index(run_ids, times)
    has = ref >= 0
    out = np.zeros(len(hi))
    r = ref[has]
    delta = np.maximum(kappa, np.abs(energy[has] - energy[r]))
    diff = hi[has] - hi[r]
    out[has] = np.where(diff >= 0, 1.0, np.where(diff >= -alpha * delta, 0.0, -1.0))
    return out


def dir_bounds(hi, life_fraction, cfg: ConstraintConfig) -> tuple[np.ndarray, np.ndarray]:
    """Upper (0/1) and lower (-1/0) boundary directions with phase-tightened bounds."""
    hi = np.asarray(hi, dtype=np.float64)
    life = np.asarray(life_fraction, dtype=np.float64)
    ub_eff = np.where(life >= 1 - cfg.b_pct / 100.0, cfg.b_b, cfg.ub)
    lb_eff = np.where(life <= cfg.a_pct / 100.0, cfg.b_a, cfg.lb)
    return (hi > ub_eff).astype(np.float64), -(hi < lb_eff).astype(np.float64)


def rescale_mono(dir_mono_values, batch_size: int, R_lw: float, R_up: float):
    """Monotonic rescale factor, growing linearly with ``|dir_mono|``."""
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    d = np.abs(np.asarray(dir_mono_values, dtype=np.float64))
    out = R_lw + (R_up - R_lw) * d / (batch_size - 1)
    return float(out) if out.ndim == 0 else out


def f_mh(dir_scalar: float, grad_enc_of_hi, floor: float = FMH_FLOOR) -> float:
    """Multi-head balancing factor ``|dir| / ||grad_E (dir * f_HI)|| = 1 / ||grad_E f_HI||``."""
    if dir_scalar == 0:
        return 0.0
    return 1.0 / max(float(np.linalg.norm(grad_enc_of_hi)), floor)


def f_mh_batch(dirs: np.ndarray, grad_enc_of_hi: np.ndarray, floor: float = FMH_FLOOR) -> np.ndarray:
    norms = np.maximum(np.linalg.norm(grad_enc_of_hi, axis=1), floor)
    return np.where(np.asarray(dirs) != 0, 1.0 / norms, 0.0)


def compute_directions(hi, life_fraction, energy, run_ids, cfg: ConstraintConfig) -> DirectionBatch:
    """All enabled constraint directions for one batch; disabled ones are zero.

    ``life_fraction`` is the ranking time coordinate (comparable across runs).
    """
    hi = np.asarray(hi, dtype=np.float64)
    n = len(hi)
    zeros = np.zeros(n)
    if cfg.use_mono:
        dm = dir_mono(hi, life_fraction)
        r_mono = rescale_mono(dm, n, cfg.R_mono_lw, cfg.R_mono_up)
    else:
        dm, r_mono = zeros.copy(), np.full(n, cfg.R_mono_lw)
    de = (dir_ene_batch(hi, energy, run_ids, life_fraction, cfg.alpha, cfg.kappa)
          if cfg.use_ene else zeros.copy())
    if cfg.use_bounds:
        du, dl = dir_bounds(hi, life_fraction, cfg)
    else:
        du, dl = zeros.copy(), zeros.copy()
    return DirectionBatch(dm, de, du, dl, np.asarray(r_mono, dtype=np.float64))


def constraint_scalar(d: DirectionBatch, fmh: np.ndarray, cfg: ConstraintConfig) -> np.ndarray:
    """Per-sample ``sum_c R_c * dir_c * F_MH_c`` in the "positive means decrease" sense.

    F_MH depends on the direction only through ``dir != 0``, so one per-sample
    factor ``1 / ||grad_E f_HI||`` serves every constraint. The monotonic
    direction enters negated: a positive rank difference marks an HI that sits
    too low in the ranking (an early sample ranked late), which must rise.
    """
    return fmh * (-d.R_mono_t * d.dir_mono + cfg.R_ene * d.dir_ene
                  + cfg.R_upper * d.dir_upper + cfg.R_lower * d.dir_lower)


def violation_rates(d: DirectionBatch) -> dict[str, float]:
    return {
        "mono": float(np.mean(d.dir_mono != 0)),
        "ene": float(np.mean(d.dir_ene != 0)),
        "upper": float(np.mean(d.dir_upper != 0)),
        "lower": float(np.mean(d.dir_lower != 0)),
    }
