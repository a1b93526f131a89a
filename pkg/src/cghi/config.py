"""Versioned JSON experiment configuration.

Example::

    {
      "schema_version": 1,
      "variant": "ccae",
      "seeds": [0, 1, 2],
      "condition": 1,
      "rescale_set": "RF_C1",
      "constraints": {"alpha": 1.0, "kappa": 0.05},
      "train": {"batch_size": 64, "lr": 0.001, "max_epochs": 200, "patience": 10},
      "data": {"source": "synthetic", "n_runs": 4, "n_frames": 200},
      "paths": {"raw": "raw", "store": "store", "checkpoints": "checkpoints"}
    }

Relative paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .cggd import CCAE_FAMILY, TrainConfig, check_variant_constraints, constraints_for_variant
from .constraints import RESCALE_SETS, ConstraintConfig
from .errors import ConfigError
from .models import VARIANTS

SCHEMA_VERSION = 1
DEFAULT_SEEDS = list(range(10))

_TOP_KEYS = {"schema_version", "variant", "seeds", "condition", "rescale_set", "constraints", "train",
             "data", "paths", "ablation"}
_DATA_KEYS = {"source", "root", "train_runs", "test_runs", "n_runs", "n_test_runs", "n_frames",
              "synthetic_seed", "profile", "trim_startup"}
_PATH_KEYS = {"raw", "store", "checkpoints"}
_ABLATION_KEYS = {"variants", "rescale_sets"}


@dataclass
class DataConfig:
    source: str = "synthetic"          # "synthetic" or "pronostia"
    root: str | None = None            # Pronostia root holding Bearing*_* directories
    train_runs: list[str] = field(default_factory=list)
    test_runs: list[str] = field(default_factory=list)
    n_runs: int = 4                    # synthetic training runs
    n_test_runs: int = 0               # synthetic held-out runs
    n_frames: int = 200
    synthetic_seed: int = 0
    profile: str = "degrading"
    trim_startup: int = 5              # startup-transient frames dropped per run


@dataclass
class ExperimentConfig:
    variant: str = "ccae"
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    condition: int = 1
    rescale_set: str = "RF_C1"
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    paths: dict[str, str] = field(default_factory=dict)
    ablation_variants: list[str] = field(default_factory=lambda: ["ccae", "ccae_eb", "ccae_mb", "ccae_me"])
    ablation_rescale_sets: list[str] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path.cwd)

    def train_config(self, variant: str | None = None, rescale_set: str | None = None) -> TrainConfig:
        """Training settings for ``variant`` with its constraint toggles applied."""
        variant = variant or self.variant
        tc = TrainConfig(**{f.name: getattr(self.train, f.name) for f in fields(TrainConfig)})
        if variant in CCAE_FAMILY:
            base = ConstraintConfig(**asdict(self.constraints))
            for k, v in RESCALE_SETS[rescale_set or self.rescale_set].items():
                setattr(base, k, v)
            if variant == self.variant:
                check_variant_constraints(variant, base)
            else:
                # other variants (ablation) start from the full constraint set
                base.use_mono = base.use_ene = base.use_bounds = True
            base = constraints_for_variant(variant, base)
            tc.constraints = base
        else:
            tc.constraints = None
        return tc.validate()

    def path(self, key: str, override: str | Path | None = None) -> Path:
        if override is not None:
            return Path(override)
        if key not in self.paths:
            raise ConfigError(f"config has no paths.{key} and none was given on the command line")
        p = Path(self.paths[key])
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        cons = asdict(self.constraints)
        for k in RESCALE_SETS[self.rescale_set]:
            cons.pop(k)
        train = {f.name: getattr(self.train, f.name) for f in fields(TrainConfig) if f.name != "constraints"}
        return {"schema_version": SCHEMA_VERSION, "variant": self.variant, "seeds": list(self.seeds),
                "condition": self.condition, "rescale_set": self.rescale_set, "constraints": cons,
                "train": train, "data": asdict(self.data), "paths": dict(self.paths),
                "ablation": {"variants": list(self.ablation_variants),
                             "rescale_sets": list(self.ablation_rescale_sets)}}


def _check_keys(section: str, d: dict, allowed: set[str]) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{section} must be a JSON object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")


def from_dict(d: dict, base_dir: str | Path | None = None) -> ExperimentConfig:
    _check_keys("config", d, _TOP_KEYS)
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    variant = d.get("variant", "ccae")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    seeds = d.get("seeds", DEFAULT_SEEDS)
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds must be a non-empty list of non-negative integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be unique")
    rescale = d.get("rescale_set", "RF_C1")
    if rescale not in RESCALE_SETS:
        raise ConfigError(f"unknown rescale_set {rescale!r}; expected one of {sorted(RESCALE_SETS)}")

    cons_d = dict(d.get("constraints", {}))
    _check_keys("constraints", cons_d, {f.name for f in fields(ConstraintConfig)})
    clash = set(cons_d) & set(RESCALE_SETS[rescale])
    if clash:
        raise ConfigError(f"rescale factors {sorted(clash)} come from rescale_set; do not set them directly")
    explicit_toggles = {k for k in ("use_mono", "use_ene", "use_bounds") if k in cons_d}
    cons = ConstraintConfig(**{**cons_d, **RESCALE_SETS[rescale]}).validate()
    if variant in CCAE_FAMILY:
        # toggles the user left out follow the variant; explicit ones must agree with it
        derived = constraints_for_variant(variant, cons)
        for k in ("use_mono", "use_ene", "use_bounds"):
            if k not in explicit_toggles:
                setattr(cons, k, getattr(derived, k))
        check_variant_constraints(variant, cons)

    train_d = dict(d.get("train", {}))
    _check_keys("train", train_d, {f.name for f in fields(TrainConfig)} - {"constraints"})
    try:
        train = TrainConfig(**train_d).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

    data_d = dict(d.get("data", {}))
    _check_keys("data", data_d, _DATA_KEYS)
    data = DataConfig(**data_d)
    if data.source not in ("synthetic", "pronostia"):
        raise ConfigError(f"data.source must be 'synthetic' or 'pronostia', got {data.source!r}")
    if data.source == "pronostia" and (not data.root or not data.train_runs):
        raise ConfigError("pronostia data needs data.root and data.train_runs")
    if data.source == "synthetic" and (data.n_runs < 1 or data.n_frames < 20):
        raise ConfigError("synthetic data needs n_runs >= 1 and n_frames >= 20")

    paths = dict(d.get("paths", {}))
    _check_keys("paths", paths, _PATH_KEYS)
    abl = dict(d.get("ablation", {}))
    _check_keys("ablation", abl, _ABLATION_KEYS)
    abl_variants = abl.get("variants", ["ccae", "ccae_eb", "ccae_mb", "ccae_me"])
    for v in abl_variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown ablation variant {v!r}")
    abl_sets = abl.get("rescale_sets", [])
    for r in abl_sets:
        if r not in RESCALE_SETS:
            raise ConfigError(f"unknown ablation rescale set {r!r}")

    cond = d.get("condition", 1)
    if not isinstance(cond, int) or cond < 1:
        raise ConfigError("condition must be a positive integer")
    return ExperimentConfig(variant, list(seeds), cond, rescale, cons, train, data, paths,
                            list(abl_variants), list(abl_sets),
                            Path(base_dir) if base_dir is not None else Path.cwd())


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(d, path.resolve().parent)


def save_config(path: str | Path, cfg: ExperimentConfig) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
