"""Tests for the config.py module."""

from pathlib import Path

import pytest

from dualkoord import config as config_module
from dualkoord import load_config, load_default_config
from dualkoord.config import (
    DEFAULT_CONFIG_YAML,
    merge_config,
    parse_groups,
    topology_overrides_from_config,
    topology_overrides_from_env,
)
from dualkoord.errors import ConfigError
from dualkoord.solver import SolverConfig


def test_load_default_config():
    cfg = load_default_config()
    assert isinstance(cfg, dict)
    assert "solver" in cfg
    assert "bench" in cfg
    assert cfg["solver"]["tol"] == pytest.approx(1e-3)


def test_default_config_path():
    root = Path(config_module.__file__).resolve().parents[1]
    assert (root / DEFAULT_CONFIG_YAML).is_file()


class TestLoadConfig:
    """Tests for user configuration files merged over the defaults."""

    def test_user_file_overrides_one_key(self, tmp_path):
        """Only the keys given in the user file change."""
        path = tmp_path / "user.yaml"
        path.write_text("solver:\n  threads: 4\n", encoding="utf-8")
        cfg = load_config(str(path))
        assert cfg["solver"]["threads"] == 4
        assert cfg["solver"]["engine"] == "sequential"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.yaml"))

    def test_non_mapping_root(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_merge_is_deep_and_copies(self):
        base = {"a": {"x": 1, "y": 2}, "b": 3}
        merged = merge_config(base, {"a": {"y": 5}})
        assert merged == {"a": {"x": 1, "y": 5}, "b": 3}
        assert base["a"]["y"] == 2

    def test_solver_config_from_defaults(self):
        """The shipped solver section builds a valid SolverConfig."""
        cfg = load_default_config()
        solver = SolverConfig.from_mapping(cfg["solver"], cfg["logistic"])
        assert solver.engine == "sequential"
        assert solver.objective.kind == "logistic"
        assert solver.objective.lam == pytest.approx(1.0)
        assert solver.claim_grain == 64
        assert solver.shuffle is True


class TestTopologyOverrides:
    """Tests for topology overrides from the environment and the config file."""

    def test_parse_groups(self):
        assert parse_groups("8,8,8,8") == [8, 8, 8, 8]
        assert parse_groups(" 4 , 2 ") == [4, 2]

    @pytest.mark.parametrize("text", ["", "8,x", "4,0"])
    def test_parse_groups_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_groups(text)

    def test_env_overrides(self, monkeypatch):
        monkeypatch.setenv("DUALKOORD_CACHE_LINE", "128")
        monkeypatch.setenv("DUALKOORD_LLC_BYTES", "1048576")
        monkeypatch.setenv("DUALKOORD_GROUPS", "4,4")
        monkeypatch.setenv("DUALKOORD_DATA_GROUP", "1")
        assert topology_overrides_from_env() == {"cache_line": 128, "llc": 1048576, "groups": [4, 4], "data_group": 1}

    def test_env_unset(self, monkeypatch):
        for name in ("DUALKOORD_CACHE_LINE", "DUALKOORD_LLC_BYTES", "DUALKOORD_GROUPS", "DUALKOORD_DATA_GROUP"):
            monkeypatch.delenv(name, raising=False)
        assert topology_overrides_from_env() == {}

    def test_env_not_an_integer(self, monkeypatch):
        monkeypatch.setenv("DUALKOORD_CACHE_LINE", "sixty-four")
        with pytest.raises(ConfigError):
            topology_overrides_from_env()

    def test_config_section(self):
        cfg = {"topology": {"cache_line": 64, "llc_bytes": None, "groups": "2,2", "data_group": None}}
        assert topology_overrides_from_config(cfg) == {"cache_line": 64, "groups": [2, 2]}
