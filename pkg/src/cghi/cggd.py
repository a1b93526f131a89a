"""Constraint-guided gradient descent for the multi-head CCAE, plus the training loop.

Per sample t the assembled gradient is

    dL/dtheta + max(||grad_E L(X_t)||, eps) * s_t * d f_HI(E(X_t)) / dtheta

with ``s_t = sum_c R_c * dir_c * F_MH``, averaged over the batch and then
handed to Adam. The decoder only sees the loss term and the HI head only the
constraint term; both meet in the encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .constraints import (ConstraintConfig, DirectionBatch, compute_directions, constraint_scalar,
                          f_mh_batch, violation_rates)
from .data import HEALTHY, TrainBatch, gather_batch, sample_batch, section_labels, split_runs
from .dsp import RunSeries
from .errors import ConfigError, DataError, NumericError
from .metrics import HISeries
from .models import VARIANTS, MultiHeadModel, build
from .nnet import AdamState, adam_step
from .softrank import soft_rank_loss

CCAE_FAMILY = ("ccae", "ccae_eb", "ccae_mb", "ccae_me", "ccae_softrank")

# constraint toggles each variant forces off
_VARIANT_OFF = {
    "ccae": (),
    "ccae_eb": ("use_mono",),
    "ccae_mb": ("use_ene",),
    "ccae_me": ("use_bounds",),
    "ccae_softrank": ("use_mono",),
}


@dataclass
class UpdateAssembly:
    update: dict[str, np.ndarray]
    loss_grads: dict[str, np.ndarray]
    hi_grads: dict[str, np.ndarray]
    enc_loss_grad_norm: np.ndarray
    constraint_scalar: np.ndarray
    directions: DirectionBatch
    hi: np.ndarray
    loss: float
    sr_loss: float = 0.0


def constraints_for_variant(variant: str, base: ConstraintConfig | None = None) -> ConstraintConfig:
    """``base`` with the toggles the variant removes switched off."""
    if variant not in _VARIANT_OFF:
        raise ConfigError(f"variant {variant!r} has no constraint set")
    cfg = replace(base) if base is not None else ConstraintConfig()
    for name in _VARIANT_OFF[variant]:
        setattr(cfg, name, False)
    return cfg.validate()


def check_variant_constraints(variant: str, cfg: ConstraintConfig) -> None:
    for name in _VARIANT_OFF.get(variant, ()):
        if getattr(cfg, name):
            raise ConfigError(f"variant {variant} requires {name}=false")


def assemble_update(model: MultiHeadModel, batch: TrainBatch, cfg: ConstraintConfig,
                    sr_lambda: float = 0.0, eps_sr: float = 1.0, train: bool = True) -> UpdateAssembly:
    """Forward both heads on ``batch`` and return the combined CGGD gradient.

    ``sr_lambda > 0`` adds the gradient of ``sr_lambda * soft_rank_loss`` on the
    HI head (the soft-rank CCAE variant).
    """
    if model.head is None:
        raise ConfigError("constraint-guided updates need a model with an HI head")
    x = model.prepare_input(batch.values)
    B = x.shape[0]
    enc, dec, head = model.encoder, model.decoder, model.head

    z = enc.forward(x, train)
    resid = dec.forward(z, train) - x
    loss = float(np.sum(resid * resid) / B)
    dz_loss = dec.backward(2.0 * resid / B)
    dec_grads = {f"D.{n}": g.copy() for n, g in dec.named_grads()}

    hi = head.forward(z, train)[:, 0]
    # head is a stack of dense layers, so row t of this is grad_E f_HI(z_t)
    g_f = head.backward(np.ones((B, 1)))

    enc_norm = B * np.linalg.norm(dz_loss.reshape(B, -1), axis=1)
    d = compute_directions(hi, batch.life_fraction, batch.energy_norm, batch.run_ids, cfg)
    any_dir = (d.dir_mono != 0) | (d.dir_ene != 0) | (d.dir_upper != 0) | (d.dir_lower != 0)
    fmh = f_mh_batch(any_dir, g_f)
    s = constraint_scalar(d, fmh, cfg)
    c = np.maximum(enc_norm, cfg.epsilon_min) * s

    upstream = c / B
    sr = 0.0
    if sr_lambda:
        sr, dsr = soft_rank_loss(hi, batch.life_fraction, eps_sr)
        upstream = upstream + sr_lambda * dsr
    dz_head = head.backward(upstream[:, None])
    head_grads = {f"HI.{n}": g.copy() for n, g in head.named_grads()}

    # encoder: loss part and constraint part separately, then the sum
    enc.backward(dz_loss)
    enc_loss = {f"E.{n}": g.copy() for n, g in enc.named_grads()}
    enc.backward(dz_head)
    enc_hi = {f"E.{n}": g.copy() for n, g in enc.named_grads()}

    update = {}
    update.update({k: enc_loss[k] + enc_hi[k] for k in enc_loss})
    update.update(dec_grads)
    update.update(head_grads)
    loss_grads = {**enc_loss, **dec_grads, **{k: np.zeros_like(v) for k, v in head_grads.items()}}
    hi_grads = {**enc_hi, **{k: np.zeros_like(v) for k, v in dec_grads.items()}, **head_grads}
    return UpdateAssembly(update, loss_grads, hi_grads, enc_norm, s, d, hi, loss, sr)


def cggd_toy_demo(start=(3.0, 1.0), eta: float = 0.5, max_steps: int = 100) -> np.ndarray:
    """Walk ``x <- x - eta * dir`` until ``x1 <= x2``; returns the visited points."""
    direction = np.array([np.sqrt(2) / 2, -np.sqrt(2) / 2])
    x = np.asarray(start, dtype=np.float64).copy()
    path = [x.copy()]
    for _ in range(max_steps):
        if x[0] - x[1] <= 0:
            break
        x = x - eta * direction
        path.append(x.copy())
    return np.array(path)


# --------------------------------------------------------------------------- training

@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 1e-3
    max_epochs: int = 200
    patience: int = 10
    # epochs before checkpoint selection and patience start; the first epochs sit
    # near the trivial zero-output reconstruction and would otherwise win
    warmup_epochs: int = 10
    val_fraction: float = 0.25
    sr_lambda: float = 1.0
    eps_sr: float = 1.0
    constraints: ConstraintConfig | None = None

    def validate(self) -> "TrainConfig":
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be >= 1")
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if not self.eps_sr > 0:
            raise ConfigError("eps_sr must be positive")
        return self


@dataclass
class TrainState:
    seed: int
    epoch: int = 0
    best_epoch: int = 0
    best_val: float = math.inf
    patience_left: int = 0
    stopped_early: bool = False
    history: list[dict] = field(default_factory=list)


@dataclass
class TrainResult:
    model: MultiHeadModel
    state: TrainState
    variant: str


LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "viol_mono", "viol_ene", "viol_upper", "viol_lower")


def _check_finite(value: float, what: str, epoch: int) -> None:
    if not np.isfinite(value):
        raise NumericError(f"{what} became non-finite at epoch {epoch}")


def _plain_batches(pools: list[np.ndarray], batch_size: int, rng: np.random.Generator
                   ) -> list[tuple[np.ndarray, np.ndarray]]:
    pairs = np.array([(r, i) for r, p in enumerate(pools) for i in p], dtype=np.int64)
    pairs = pairs[rng.permutation(len(pairs))]
    chunks = [pairs[i:i + batch_size] for i in range(0, len(pairs), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        # batch norm needs two samples; fold a lone leftover into the previous batch
        last = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], last])
    return [(c[:, 0], c[:, 1]) for c in chunks]


def _graded_violation(d: DirectionBatch, cfg: ConstraintConfig) -> float:
    n = len(d.dir_mono)
    total = 0.0
    if cfg.use_mono:
        total += float(np.mean(np.abs(d.dir_mono))) / max(n - 1, 1)
    if cfg.use_ene:
        total += float(np.mean(d.dir_ene != 0))
    if cfg.use_bounds:
        total += float(np.mean((d.dir_upper != 0) | (d.dir_lower != 0)))
    return total


def split_seed_for(seed: int) -> int:
    """Seed of the train/validation frame split used by :func:`train`."""
    return int(np.random.default_rng(np.random.SeedSequence([seed, 0x5B])).integers(2 ** 31))


def train(variant: str, runs: Sequence[RunSeries], cfg: TrainConfig | None = None,
          seed: int = 0, model: MultiHeadModel | None = None) -> TrainResult:
    """Train one variant on normalized runs; deterministic given ``seed``.

    CAE: reconstruction only, on the healthy section of each run.
    SR-CAE: reconstruction plus ``sr_lambda`` times the soft-rank loss.
    CCAE family: constraint-guided updates on stratified batches.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    cfg = (cfg or TrainConfig()).validate()
    runs = list(runs)
    if not runs:
        raise DataError("no training runs")
    ccfg = None
    if variant in CCAE_FAMILY:
        if cfg.constraints is None:
            ccfg = constraints_for_variant(variant)
        else:
            ccfg = cfg.constraints.validate()
            check_variant_constraints(variant, ccfg)
    model = model or build(variant, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A]))
    train_pools, val_pools = split_runs(runs, 1 - cfg.val_fraction, split_seed_for(seed))
    if variant == "cae":
        healthy = [section_labels(len(r)) == HEALTHY for r in runs]
        train_pools = [p[h[p]] for p, h in zip(train_pools, healthy)]
        val_pools = [p[h[p]] for p, h in zip(val_pools, healthy)]
    n_train = sum(len(p) for p in train_pools)
    n_val = sum(len(p) for p in val_pools)
    if n_train < 2 or n_val < 2:
        raise DataError(f"too few frames to train ({n_train} train, {n_val} validation)")

    # fixed validation batches: the whole validation pool, shuffled once into chunks
    val_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7B]))
    val_batches = [gather_batch(runs, r, f) for r, f in _plain_batches(val_pools, cfg.batch_size, val_rng)]

    adam = AdamState()
    state = TrainState(seed=seed, patience_left=cfg.patience)
    best = model.state_dict()
    params = model.named_parameters()
    n_batches = math.ceil(n_train / cfg.batch_size)
    bs_train = min(cfg.batch_size, n_train)

    for epoch in range(1, cfg.max_epochs + 1):
        losses, rates = [], []
        if variant == "cae":
            batches = [gather_batch(runs, r, f) for r, f in _plain_batches(train_pools, cfg.batch_size, rng)]
        else:
            batches = [sample_batch(runs, bs_train, rng, train_pools) for _ in range(n_batches)]
        for batch in batches:
            if variant == "cae":
                loss, grads = model.reconstruction_loss(batch.values)
            elif variant == "sr_cae":
                loss, grads = model.total_loss_sr(batch.values, batch.life_fraction, cfg.sr_lambda, cfg.eps_sr)
            else:
                lam = cfg.sr_lambda if variant == "ccae_softrank" else 0.0
                asm = assemble_update(model, batch, ccfg, lam, cfg.eps_sr)
                loss, grads = asm.loss, asm.update
                rates.append(violation_rates(asm.directions))
            _check_finite(loss, "training loss", epoch)
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericError(f"non-finite gradient at epoch {epoch}")
            adam_step(params, grads, adam, cfg.lr)
            losses.append(loss)

        val = _validation_loss(model, variant, val_batches, cfg, ccfg)
        _check_finite(val, "validation loss", epoch)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val}
        for key in ("mono", "ene", "upper", "lower"):
            row[f"viol_{key}"] = float(np.mean([r[key] for r in rates])) if rates else 0.0
        state.history.append(row)
        state.epoch = epoch
        if epoch < min(cfg.warmup_epochs, cfg.max_epochs):
            continue
        if val < state.best_val:
            state.best_val, state.best_epoch = val, epoch
            state.patience_left = cfg.patience
            best = model.state_dict()
        else:
            state.patience_left -= 1
            if state.patience_left <= 0:
                state.stopped_early = True
                break

    model.load_state_dict(best)
    return TrainResult(model, state, variant)


def _validation_loss(model: MultiHeadModel, variant: str, batches: list[TrainBatch],
                     cfg: TrainConfig, ccfg: ConstraintConfig | None) -> float:
    total = 0.0
    for batch in batches:
        x = model.prepare_input(batch.values)
        z = model.encoder.forward(x, False)
        r = model.decoder.forward(z, False) - x
        value = float(np.sum(r * r) / len(x))
        if variant != "cae":
            hi = model.head.forward(z, False)[:, 0]
            if variant == "sr_cae":
                value += cfg.sr_lambda * soft_rank_loss(hi, batch.life_fraction, cfg.eps_sr)[0]
            else:
                d = compute_directions(hi, batch.life_fraction, batch.energy_norm, batch.run_ids, ccfg)
                value += _graded_violation(d, ccfg)
                if variant == "ccae_softrank":
                    value += cfg.sr_lambda * soft_rank_loss(hi, batch.life_fraction, cfg.eps_sr)[0]
        total += value
    return total / len(batches)


def predict_hi(model: MultiHeadModel, runs: Sequence[RunSeries], seed: int = 0) -> list:
    """HI series (time-ordered) for every run; CAE uses the negative reconstruction error."""
    return [HISeries(run.run_id, seed, model.predict_hi(run.values), run.timestamps.copy()) for run in runs]


def write_log(path, state: TrainState) -> None:
    """Training history as CSV, one row per epoch."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in state.history:
            fh.write(",".join(repr(row[c]) if c != "epoch" else str(row[c]) for c in LOG_COLUMNS) + "\n")
