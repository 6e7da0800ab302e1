import os

import pytest

from config.loader import load_config_yml, load_runtime_env


def test_missing_config(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config_yml(str(tmp_path / "absent.yaml"))


def test_config_must_be_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_config_yml(str(path))


def test_json_is_accepted(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"schema_version": 1, "radii": [8, 16]}', encoding="utf-8")
    assert load_config_yml(str(path)) == {"schema_version": 1, "radii": [8, 16]}


def test_runtime_env_keeps_existing_values(tmp_path, monkeypatch):
    path = tmp_path / "runtime.yaml"
    path.write_text("LANGEVIN_LOG_DIR: ./from_file\nLANGEVIN_THREADS:\nLANGEVIN_EXTRA: 4\n", encoding="utf-8")
    monkeypatch.setenv("LANGEVIN_LOG_DIR", "./from_env")
    for name in ("LANGEVIN_THREADS", "LANGEVIN_EXTRA"):
        monkeypatch.setenv(name, "")
        monkeypatch.delenv(name)
    load_runtime_env(str(path))
    assert os.environ["LANGEVIN_LOG_DIR"] == "./from_env"
    assert "LANGEVIN_THREADS" not in os.environ
    assert os.environ["LANGEVIN_EXTRA"] == "4"


def test_runtime_env_file_is_optional(tmp_path):
    load_runtime_env(str(tmp_path / "absent.yaml"))
