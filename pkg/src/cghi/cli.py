"""Command-line entry point: synth, preprocess, train, evaluate, ablation.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure (non-finite loss).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as D
from .cggd import TrainResult, predict_hi, split_seed_for, train, write_log
from .config import ExperimentConfig, load_config
from .errors import CGHIError, ConfigError, DataError, NumericError
from .metrics import aggregate, robustness, trendability, write_hi_csv, write_report
from .models import build
from .nnet import load_checkpoint, save_checkpoint
from .plots import write_hi_plots
from .store import TEST, TRAIN, load_store, save_store


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        # usage errors share exit code 1 with configuration errors
        raise ConfigError(f"{self.prog}: {message}")


def _seeds(cfg: ExperimentConfig, args) -> list[int]:
    if getattr(args, "seeds", None):
        return list(args.seeds)
    if getattr(args, "seed", None) is not None:
        return [args.seed]
    return list(cfg.seeds)


# --------------------------------------------------------------------------- raw data

def _synthetic_ids(cfg: ExperimentConfig) -> tuple[list[str], list[str]]:
    c = cfg.condition
    n, m = cfg.data.n_runs, cfg.data.n_test_runs
    return [f"Bearing{c}_{k + 1}" for k in range(n)], [f"Bearing{c}_{k + 1}" for k in range(n, n + m)]


def _generate_synthetic(cfg: ExperimentConfig, seed: int | None = None):
    seed = cfg.data.synthetic_seed if seed is None else seed
    train_ids, test_ids = _synthetic_ids(cfg)
    raw = D.synthetic_runs(len(train_ids) + len(test_ids), cfg.data.n_frames, seed, cfg.data.profile,
                           cfg.condition)
    return raw[:len(train_ids)], raw[len(train_ids):]


def _load_raw(cfg: ExperimentConfig, raw_dir: Path | None):
    if cfg.data.source == "pronostia":
        root = Path(cfg.data.root)
        root = root if root.is_absolute() else cfg.base_dir / root
        return ([D.load_pronostia_run(root / r) for r in cfg.data.train_runs],
                [D.load_pronostia_run(root / r) for r in cfg.data.test_runs])
    if raw_dir is None:
        return _generate_synthetic(cfg)
    train_ids, test_ids = _synthetic_ids(cfg)
    load = lambda rid: D.load_raw_store(raw_dir / f"{rid}.npz")
    for rid in train_ids + test_ids:
        if not (raw_dir / f"{rid}.npz").exists():
            raise DataError(f"raw store {raw_dir} has no {rid}.npz (run `synth` first)")
    return [load(r) for r in train_ids], [load(r) for r in test_ids]


def _trim(raw_runs, count: int):
    # dropping raw snapshots before the transform keeps the fitted statistics free of
    # the startup transient; life fractions are then computed on the retained span
    for r in raw_runs:
        if count >= len(r):
            raise DataError(f"trim_startup {count} leaves nothing of run {r[0].run_id}")
    return [r[count:] for r in raw_runs] if count else raw_runs


# --------------------------------------------------------------------------- commands

def cmd_synth(cfg: ExperimentConfig, args) -> int:
    out = cfg.path("raw", args.out)
    out.mkdir(parents=True, exist_ok=True)
    tr, te = _generate_synthetic(cfg, args.seed)
    for run in tr + te:
        D.save_raw_store(run, out / f"{run[0].run_id}.npz")
    print(f"wrote {len(tr) + len(te)} synthetic runs to {out}")
    return 0


def preprocess(cfg: ExperimentConfig, raw_dir: Path | None):
    tr_raw, te_raw = _load_raw(cfg, raw_dir)
    n = cfg.data.trim_startup
    if n:
        tr_raw, te_raw = _trim(tr_raw, n), _trim(te_raw, n)
    train_runs, stats = D.prepare_runs(tr_raw, cfg.condition)
    test_runs = D.prepare_runs(te_raw, cfg.condition, stats)[0] if te_raw else []
    return train_runs, test_runs, stats


def cmd_preprocess(cfg: ExperimentConfig, args) -> int:
    out = cfg.path("store", args.out)
    raw_dir = None
    if args.raw is not None:
        raw_dir = Path(args.raw)
    elif "raw" in cfg.paths and cfg.data.source == "synthetic":
        raw_dir = cfg.path("raw")
    train_runs, test_runs, stats = preprocess(cfg, raw_dir)
    runs = train_runs + test_runs
    save_store(out, runs, [TRAIN] * len(train_runs) + [TEST] * len(test_runs), stats)
    print(f"stored {sum(len(r) for r in runs)} frames from {len(runs)} runs in {out}")
    return 0


def _store_runs(cfg: ExperimentConfig, override):
    runs, splits, _ = load_store(cfg.path("store", override))
    train_runs = [r for r, s in zip(runs, splits) if s == TRAIN]
    if not train_runs:
        raise DataError("the frame store has no training runs")
    return runs, splits, train_runs


def _out_of_range(model, runs) -> float:
    hi = np.concatenate([model.predict_hi(r.values) for r in runs])
    return float(np.mean((hi < -0.02) | (hi > 1.02)))


def _write_split_manifest(path: Path, runs, tc, seed: int) -> None:
    tr, va = D.split_runs(runs, 1 - tc.val_fraction, split_seed_for(seed))
    doc = {"seed": seed, "train_fraction": 1 - tc.val_fraction, "runs": [r.run_id for r in runs],
           "train_frames": {r.run_id: t.tolist() for r, t in zip(runs, tr)},
           "val_frames": {r.run_id: v.tolist() for r, v in zip(runs, va)}}
    path.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def cmd_train(cfg: ExperimentConfig, args) -> int:
    out = cfg.path("checkpoints", args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, _, train_runs = _store_runs(cfg, args.store)
    tc = cfg.train_config()
    seeds = _seeds(cfg, args)
    lines = ["seed,epochs,best_epoch,best_val_loss,out_of_range"]
    for seed in seeds:
        res: TrainResult = train(cfg.variant, train_runs, tc, seed)
        save_checkpoint(out / f"seed_{seed}.ckpt", res.model.state_dict())
        write_log(out / f"seed_{seed}_log.csv", res.state)
        _write_split_manifest(out / f"seed_{seed}_split.json", train_runs, tc, seed)
        oor = _out_of_range(res.model, train_runs) if cfg.variant != "cae" else float("nan")
        lines.append(f"{seed},{res.state.epoch},{res.state.best_epoch},{res.state.best_val!r},{oor!r}")
        last = res.state.history[res.state.best_epoch - 1]
        print(f"seed {seed}: {res.state.epoch} epochs, best {res.state.best_epoch} "
              f"(val {res.state.best_val:.4g}); violations at best epoch: mono {last['viol_mono']:.3f}, "
              f"ene {last['viol_ene']:.3f}, upper {last['viol_upper']:.3f}, lower {last['viol_lower']:.3f}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "train_manifest.json").write_text(
        json.dumps({"variant": cfg.variant, "seeds": seeds}, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def evaluate(cfg: ExperimentConfig, runs, checkpoints: Path, seeds: list[int], variant: str | None = None):
    variant = variant or cfg.variant
    found = sorted(int(p.stem.split("_")[1]) for p in checkpoints.glob("seed_*.ckpt"))
    missing = [s for s in seeds if s not in found]
    if missing:
        raise DataError(f"missing checkpoints for seeds {missing} in {checkpoints}; found seeds {found}")
    series = []
    for seed in seeds:
        model = build(variant, seed)
        model.load_state_dict(load_checkpoint(checkpoints / f"seed_{seed}.ckpt"))
        series.extend(predict_hi(model, runs, seed))
    return series


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    out = Path(args.out) if args.out else cfg.base_dir / "results"
    out.mkdir(parents=True, exist_ok=True)
    runs, _, _ = _store_runs(cfg, args.store)
    seeds = _seeds(cfg, args)
    series = evaluate(cfg, runs, cfg.path("checkpoints", args.checkpoints), seeds)
    write_hi_csv(out / "hi_curves.csv", series)
    rows = aggregate(series) if len(seeds) >= 2 else []
    write_report(out / "metrics.csv", rows)
    write_hi_plots(out / "plots", series)
    for r in rows:
        print(f"{r.run_id}: trendability {r.trend_mean:.3f}±{r.trend_std:.3f}, robustness "
              f"{r.robust_mean:.3f}±{r.robust_std:.3f}, consistency {r.cons_mean:.3f}±{r.cons_std:.3f}")
    if len(seeds) < 2:
        print("single seed: metrics.csv left empty (consistency needs seed pairs)")
    return 0


ABLATION_COLUMNS = ("variant", "rescale_set", "seed", "trendability", "robustness", "out_of_range")


def run_ablation(cfg: ExperimentConfig, train_runs, seeds: list[int]):
    """Per-seed rows and per-variant HI series for every ablation configuration."""
    jobs = [(v, cfg.rescale_set) for v in cfg.ablation_variants]
    jobs += [("ccae", r) for r in cfg.ablation_rescale_sets if ("ccae", r) not in jobs]
    rows, series = [], {}
    for variant, rset in jobs:
        tc = cfg.train_config(variant, rset)
        for seed in seeds:
            model = train(variant, train_runs, tc, seed).model
            hs = predict_hi(model, train_runs, seed)
            series.setdefault((variant, rset), []).extend(hs)
            rows.append((variant, rset, seed, float(np.mean([trendability(h) for h in hs])),
                         float(np.mean([robustness(h) for h in hs])), _out_of_range(model, train_runs)))
    return rows, series


def cmd_ablation(cfg: ExperimentConfig, args) -> int:
    out = Path(args.out) if args.out else cfg.base_dir / "ablation"
    out.mkdir(parents=True, exist_ok=True)
    _, _, train_runs = _store_runs(cfg, args.store)
    seeds = _seeds(cfg, args)
    rows, series = run_ablation(cfg, train_runs, seeds)
    with open(out / "ablation.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(ABLATION_COLUMNS) + "\n")
        for v, r, s, tr, ro, oor in rows:
            fh.write(f"{v},{r},{s},{tr!r},{ro!r},{oor!r}\n")
    with open(out / "ablation_summary.csv", "w", encoding="utf-8") as fh:
        fh.write("variant,rescale_set,bearing,trendability_mean,trendability_std,robustness_mean,"
                 "robustness_std,consistency_mean,consistency_std\n")
        for (v, r), hs in series.items():
            if len(seeds) < 2:
                continue
            for m in aggregate(hs):
                fh.write(f"{v},{r},{m.run_id},{m.trend_mean!r},{m.trend_std!r},{m.robust_mean!r},"
                         f"{m.robust_std!r},{m.cons_mean!r},{m.cons_std!r}\n")
    for v, r, s, tr, ro, oor in rows:
        print(f"{v:14s} {r} seed {s}: trendability {tr:.3f}, robustness {ro:.3f}, out of range {oor:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cghi", description="Constraint-guided health-indicator experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help: str):
        sp.add_argument("--config", required=True, help="experiment JSON config")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seeds", type=int, nargs="+", help="override the config seeds")
        sp.add_argument("--seed", type=int, help="single seed")

    sp = sub.add_parser("synth", help="write synthetic raw runs")
    common(sp, "raw store directory (default paths.raw)")
    sp = sub.add_parser("preprocess", help="log-mel transform, normalize, write the frame store")
    common(sp, "frame store directory (default paths.store)")
    sp.add_argument("--raw", help="synthetic raw store directory")
    sp = sub.add_parser("train", help="train one checkpoint per seed")
    common(sp, "checkpoint directory (default paths.checkpoints)")
    sp.add_argument("--store", help="frame store directory")
    sp = sub.add_parser("evaluate", help="HI curves, metrics and plots")
    common(sp, "results directory")
    sp.add_argument("--store", help="frame store directory")
    sp.add_argument("--checkpoints", help="checkpoint directory")
    sp = sub.add_parser("ablation", help="train and compare constraint ablations")
    common(sp, "results directory")
    sp.add_argument("--store", help="frame store directory")
    return p


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train,
            "evaluate": cmd_evaluate, "ablation": cmd_ablation}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except CGHIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
