import json

import pytest

from cghi.config import ExperimentConfig, from_dict, load_config, save_config
from cghi.errors import ConfigError


def base(**kw):
    d = {"schema_version": 1, "variant": "ccae", "seeds": [0, 1]}
    d.update(kw)
    return d


def test_defaults():
    cfg = from_dict({"schema_version": 1})
    assert cfg.variant == "ccae" and cfg.seeds == list(range(10))
    tc = cfg.train_config()
    assert tc.batch_size == 64 and tc.lr == 1e-3 and tc.patience == 10
    assert tc.constraints.R_mono_lw == 1.25 and tc.constraints.R_upper == 2.0


def test_rescale_set_applied():
    tc = from_dict(base(rescale_set="RF_C2")).train_config()
    assert (tc.constraints.R_mono_lw, tc.constraints.R_mono_up, tc.constraints.R_ene) == (1.05, 1.25, 1.25)


@pytest.mark.parametrize("bad", [
    {"schema_version": 2},
    {"variant": "vae"},
    {"seeds": []},
    {"seeds": [1, 1]},
    {"rescale_set": "RF_C9"},
    {"constraints": {"R_ene": 3.0}},
    {"constraints": {"bogus": 1}},
    {"train": {"lr": -1}},
    {"train": {"nope": 1}},
    {"data": {"source": "ftp"}},
    {"data": {"source": "pronostia"}},
    {"extra": 1},
    {"paths": {"weird": "x"}},
    {"ablation": {"variants": ["nope"]}},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        from_dict(base(**bad))


def test_variant_toggle_agreement():
    cfg = from_dict(base(variant="ccae_eb"))
    assert cfg.constraints.use_mono is False
    assert cfg.train_config().constraints.use_mono is False
    with pytest.raises(ConfigError):
        from_dict(base(variant="ccae_eb", constraints={"use_mono": True}))


def test_ablation_variants_get_their_own_toggles():
    cfg = from_dict(base())
    assert cfg.train_config("ccae_me").constraints.use_bounds is False
    assert cfg.train_config("ccae_me").constraints.use_mono is True
    assert cfg.train_config("sr_cae").constraints is None


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_save_load_round_trip(tmp_path):
    cfg = from_dict(base(rescale_set="RF_C2", train={"max_epochs": 5}, paths={"store": "s"}), tmp_path)
    save_config(tmp_path / "c.json", cfg)
    back = load_config(tmp_path / "c.json")
    assert back.to_dict() == cfg.to_dict()
    assert back.path("store") == tmp_path / "s"
    with pytest.raises(ConfigError):
        back.path("raw")


def test_paths_relative_to_config(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps(base(paths={"checkpoints": "ck"})))
    assert load_config(tmp_path / "c.json").path("checkpoints") == tmp_path / "ck"
    assert isinstance(load_config(tmp_path / "c.json"), ExperimentConfig)


def test_shipped_config_loads():
    from pathlib import Path
    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "synthetic_desk.json")
    assert cfg.seeds == [0, 1, 2] and cfg.train_config().max_epochs == 30
