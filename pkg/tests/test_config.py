from pathlib import Path

import pytest
import yaml

from stridesim.checkpoint import config_hash
from stridesim.config import RunConfig, load_run_config

ROOT = Path(__file__).resolve().parents[1]


def test_defaults_when_no_file():
    cfg = load_run_config(None)
    assert cfg.env.num_envs == 1
    assert cfg.randomization.friction == (0.2, 1.25)
    assert cfg.ppo.gamma == 0.99


def test_walk_reference_loads():
    cfg = load_run_config(ROOT / "configs" / "walk_reference.yaml")
    assert cfg.env.num_envs == 256
    assert cfg.env.terrain_kinds["stairs"] > 0
    assert cfg.rewards.mode == "walk"
    assert cfg.ppo.learning_rate == 1e-3
    assert cfg.gains_kp["KFE"] == 60.0
    assert cfg.randomization.push.enabled


def test_hop_reference_loads():
    cfg = load_run_config(ROOT / "configs" / "hop_reference.yaml")
    assert cfg.rewards.mode == "hop_double"
    assert not cfg.randomization.push.enabled


def test_without_dr_zeroes_everything():
    cfg = load_run_config(ROOT / "configs" / "walk_reference.yaml").without_dr()
    assert cfg.randomization.friction[0] == cfg.randomization.friction[1]
    assert cfg.randomization.noise_ffe_pos == 0.0
    assert not cfg.randomization.push.enabled


def test_unknown_field_rejected(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"ppo": {"warp_speed": 9}}))
    with pytest.raises(ValueError, match="warp_speed"):
        load_run_config(bad)


def test_config_hash_stable_and_sensitive():
    cfg = load_run_config(ROOT / "configs" / "walk_reference.yaml")
    h1 = config_hash(cfg.to_dict())
    h2 = config_hash(load_run_config(ROOT / "configs" / "walk_reference.yaml").to_dict())
    assert h1 == h2
    cfg.ppo.gamma = 0.95
    assert config_hash(cfg.to_dict()) != h1
