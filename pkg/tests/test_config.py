import json

import pytest

from gridforge.config import load_settings
from gridforge.errors import InputError


def test_schema_defaults():
    settings = load_settings(environ={})
    assert settings.get("solver") == "highs"
    assert settings.get("mip_gap") == pytest.approx(1e-4)
    assert settings.get("time_limit") is None
    assert settings.get("time_limit", 60.0) == 60.0
    assert settings["oa_seed_tangents"] == 8
    assert settings["enforce_v2g_min_apparent"] is False


def test_precedence(tmp_path):
    path = tmp_path / "gridforge.toml"
    path.write_text('solver = "cbc"\nmip_gap = 0.01\nthreads = "4"\n', encoding="utf-8")

    from_file = load_settings(path, environ={})
    assert from_file["solver"] == "cbc"
    assert from_file["mip_gap"] == pytest.approx(0.01)
    assert from_file["threads"] == 4

    from_env = load_settings(path, environ={"GRIDFORGE_SOLVER": "highs"})
    assert from_env["solver"] == "highs"

    from_cli = load_settings(
        path, overrides={"solver": "cbc", "mip_gap": None}, environ={"GRIDFORGE_SOLVER": "highs"}
    )
    assert from_cli["solver"] == "cbc"
    # None 视为未指定
    assert from_cli["mip_gap"] == pytest.approx(0.01)


def test_json_config_and_unknown_key(tmp_path):
    path = tmp_path / "gridforge.json"
    path.write_text(json.dumps({"cone_tol": 1e-7, "colour": "blue"}), encoding="utf-8")
    settings = load_settings(path, environ={})
    assert settings["cone_tol"] == pytest.approx(1e-7)
    assert "colour" not in settings


def test_bool_from_env_string(tmp_path):
    path = tmp_path / "gridforge.toml"
    path.write_text('warm_start_holistic = "yes"\n', encoding="utf-8")
    assert load_settings(path, environ={})["warm_start_holistic"] is True


def test_missing_config_file(tmp_path):
    with pytest.raises(InputError):
        load_settings(tmp_path / "absent.toml", environ={})


def test_malformed_config_file(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("solver = ", encoding="utf-8")
    with pytest.raises(InputError):
        load_settings(path, environ={})


def test_bad_value_type(tmp_path):
    path = tmp_path / "gridforge.toml"
    path.write_text('oa_max_rounds = "many"\n', encoding="utf-8")
    with pytest.raises(InputError):
        load_settings(path, environ={})


@pytest.mark.parametrize("key, value", [("cone_tol", 1e-9), ("oa_max_rounds", 0), ("oa_seed_tangents", 2)])
def test_value_below_minimum(tmp_path, key, value):
    path = tmp_path / "gridforge.json"
    path.write_text(json.dumps({key: value}), encoding="utf-8")
    with pytest.raises(InputError):
        load_settings(path, environ={})


def test_cone_tol_override_below_minimum():
    with pytest.raises(InputError):
        load_settings(overrides={"cone_tol": 1e-12}, environ={})
    assert load_settings(overrides={"cone_tol": 1e-7}, environ={})["cone_tol"] == pytest.approx(1e-7)
