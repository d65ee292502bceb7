import json
from pathlib import Path

import pytest

from pwtprune.config import ConfigError, RunConfig, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = {"dataset": {"kind": "synthetic"}, "epochs": 2}


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.architecture == "vgg-micro" and cfg.batch_size == 32 and cfg.precision == "float32"
    assert cfg.optimizer.lr == 1e-3 and cfg.schedule.mode == "None"
    assert [s["type"] for s in cfg.layer_specs()] == ["conv", "conv", "pool", "conv", "conv", "pool", "linear"]


def test_unknown_key_names_its_path():
    with pytest.raises(ConfigError, match=r"schedule\.rate"):
        parse_config(dict(MINIMAL, schedule={"rate": 1}))
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(dict(MINIMAL, bogus=1))


def test_bad_values_name_their_path():
    with pytest.raises(ConfigError, match=r"optimizer\.lr"):
        parse_config(dict(MINIMAL, optimizer={"lr": -1}))
    with pytest.raises(ConfigError, match=r"architecture\.0"):
        parse_config(dict(MINIMAL, architecture=[{"type": "conv", "out": 0}]))
    with pytest.raises(ConfigError, match="epochs"):
        parse_config({"dataset": {"kind": "synthetic"}})


def test_schedule_consistency_is_checked():
    bad = dict(MINIMAL, schedule={"mode": "PWT", "rate_per_epoch": 1.0, "target_prune_perc": 50.0})
    with pytest.raises(ConfigError, match="reaches only"):
        parse_config(bad)


def test_custom_architecture():
    cfg = parse_config(dict(MINIMAL, architecture=[{"type": "conv", "out": 4, "k": 3, "stride": 2},
                                                   {"type": "pool"}, {"type": "linear", "out": 8},
                                                   {"type": "linear"}]))
    assert cfg.layer_specs()[0] == {"type": "conv", "out": 4, "k": 3, "stride": 2}
    assert cfg.layer_specs()[2] == {"type": "linear", "out": 8}


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(tmp_path / "bad.json")


@pytest.mark.parametrize("path", sorted(p for p in CONFIGS.rglob("*.json") if p.parent.name != "cost"),
                         ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert isinstance(cfg, RunConfig)
    assert json.loads(path.read_text())["seed"] == cfg.seed
