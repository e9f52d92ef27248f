"""Scenario configuration: profiles, sets, TOML and environment"""

from pathlib import Path

import pytest

from loftsim.errors import ConfigurationError
from loftsim.harness.config import derive_seed, env_log_level, env_out_dir, load_config

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def test_desk_defaults(clean_env):
    cfg = load_config()
    assert (cfg.capacity, cfg.transmission_rate) == (1500, 250.0)
    assert cfg.af_range == (4, 8)
    assert cfg.anp == 100
    assert (cfg.run_length, cfg.attack_start, cfg.duration_threshold) == (200, 60, 20.0)
    assert cfg.detector_settings().t_idle == 20.0


def test_paper_profile(clean_env):
    cfg = load_config(overrides={"profile": "paper"})
    assert cfg.anp == 20
    assert (cfg.run_length, cfg.attack_start, cfg.duration_threshold) == (1000, 300, 100.0)


def test_for_set(clean_env):
    cfg = load_config()
    four = cfg.for_set(4)
    assert (four.capacity, four.transmission_rate, four.af_range, four.anp) == (3000, 600.0, (16, 19), 400)
    mixed = cfg.for_set(2, attack_set_index=3, detector_enabled=True)
    assert (mixed.capacity, mixed.af_range, mixed.attack_index) == (2000, (12, 16), 3)
    assert mixed.detector_enabled and not cfg.detector_enabled
    with pytest.raises(ConfigurationError):
        cfg.for_set(5)


def test_environment_and_override_precedence(clean_env):
    clean_env.setenv("LOFTSIM_SEED", "42")
    clean_env.setenv("LOFTSIM_PAPER_SCALE", "yes")
    cfg = load_config()
    assert cfg.seed == 42 and cfg.profile == "paper"
    assert load_config(overrides={"seed": 7, "profile": None}).seed == 7
    assert load_config(use_env=False).seed == 0
    clean_env.setenv("LOFTSIM_SEED", "abc")
    with pytest.raises(ConfigurationError):
        load_config()


def test_env_paths(clean_env):
    assert env_out_dir() == "out"
    clean_env.setenv("LOFTSIM_LOG_LEVEL", "debug")
    assert env_log_level() == "DEBUG"


def test_dotenv_file_is_read(clean_env, tmp_path):
    (tmp_path / ".env").write_text("LOFTSIM_SEED=11\n")
    assert load_config().seed == 11


def test_toml_file(clean_env, tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text('seed = 5\nset_index = 2\n\n[topology]\ncapacity = 900\n\n[attack]\nanp = 7\n')
    cfg = load_config(path)
    assert (cfg.seed, cfg.set_index, cfg.capacity, cfg.anp, cfg.transmission_rate) == (5, 2, 900, 7, 300.0)


@pytest.mark.parametrize("name", ["desk.toml", "paper.toml"])
def test_shipped_configs_load(clean_env, name):
    cfg = load_config(CONFIG_DIR / name)
    assert cfg.profile == name.removesuffix(".toml")


@pytest.mark.parametrize("text", [
    "colour = 'red'\n",
    "[topology]\nmatch_fields = ['vlan']\n",
    "run_length_s = 50\nattack_start_s = 60\n",
    "set_index = 4\n[topology]\nidle_timeout = 15.0\n",
    "sets = [1, 7]\n",
    "seed = \n",
])
def test_invalid_configs(clean_env, tmp_path, text):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_missing_file(clean_env, tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.toml")


def test_derive_seed():
    assert derive_seed(3, 1, 2) == derive_seed(3, 1, 2)
    assert len({derive_seed(3, 1, 2), derive_seed(3, 2, 1), derive_seed(4, 1, 2), derive_seed(3, 1)}) == 4
