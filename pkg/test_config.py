"""
Test script for settings and run configuration loading.
"""
import os
import sys
import tempfile
from pathlib import Path

import orjson
from pydantic import ValidationError

# Add project root to path
sys.path.append(str(Path(__file__).parent))

from config import PistonConfig, RunConfig, get_settings, load_run_config, reload_settings
from core import NewtonOptions


def test_settings_from_environment():
    print("\n🔧 Settings from environment")
    with tempfile.TemporaryDirectory() as tmp:
        overrides = {
            "IMEX_OUTPUT_DIR": str(Path(tmp) / "artifacts"),
            "IMEX_NEWTON_TOL": "1e-10",
            "IMEX_FD_N_JOBS": "3",
        }
        saved = {key: os.environ.get(key) for key in overrides}
        os.environ.update(overrides)
        try:
            settings = reload_settings()
            assert settings.newton_tol == 1e-10
            assert settings.fd_n_jobs == 3
            assert settings.output_path.is_dir()
            assert get_settings() is settings
            assert NewtonOptions.from_settings().tol == 1e-10
        finally:
            for key, value in saved.items():
                if value is None:
                    os.environ.pop(key, None)
                else:
                    os.environ[key] = value
            reload_settings()
    print(f"   ✅ newton_tol={settings.newton_tol}, fd_n_jobs={settings.fd_n_jobs}")


def test_run_config_defaults():
    config = RunConfig()
    assert config.problem == "piston"
    assert config.scheme is None and config.dt is None and config.T is None
    assert config.trajectory == "memory"
    assert config.piston.scheme == "imex1"


def test_normalized_round_trip():
    config = RunConfig(problem="linear-model", scheme="IMEX3", dt=0.05, T=2.0, mu=[1.0, 2.0, 3.0, 4.0])
    assert config.scheme == "imex3"
    data = orjson.loads(orjson.dumps(config.normalized()))
    assert RunConfig.model_validate(data) == config


def test_invalid_run_configs():
    for bad in ({"scheme": "imex9"}, {"dt": 0.0}, {"T": -1.0}, {"problem": "heat"},
                {"trajectory": "disk"}, {"unexpected": True}):
        try:
            RunConfig(**bad)
        except ValidationError:
            pass
        else:
            raise AssertionError(f"{bad} should be rejected")


def test_overrides():
    base = RunConfig(problem="linear-model", dt=0.1)
    updated = base.with_overrides(scheme="imex4", dt=None, T=3.0)
    assert updated.scheme == "imex4" and updated.dt == 0.1 and updated.T == 3.0
    assert base.scheme is None
    try:
        base.with_overrides(t0=5.0, T=1.0)
    except ValidationError:
        pass
    else:
        raise AssertionError("T before t0 should be rejected")


def test_load_flat_piston_config():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "piston.json"
        path.write_bytes(orjson.dumps({"n_cells": 50, "mu_k": 3.5, "dt": 0.005, "T": 0.5, "scheme": "imex2",
                                       "c_s": 0.1}))
        config = load_run_config(path)
    assert config.problem == "piston"
    assert config.mu == [3.5] and config.scheme == "imex2"
    assert config.dt == 0.005 and config.T == 0.5
    assert config.piston.n_cells == 50 and config.piston.c_s == 0.1


def test_load_full_run_config():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "run.json"
        path.write_bytes(orjson.dumps({"problem": "scalar-decay", "mu": [2.0], "T": 0.5,
                                       "trajectory": f"file:{tmp}/run.imxtraj"}))
        config = load_run_config(path)
        assert config.problem == "scalar-decay" and config.mu == [2.0]

        path.write_bytes(orjson.dumps([1, 2, 3]))
        try:
            load_run_config(path)
        except ValueError:
            pass
        else:
            raise AssertionError("a JSON array is not a configuration")


def test_piston_config_validation():
    assert PistonConfig(p0=1.0, area=2.0).preload_force == -2.0
    for bad in ({"n_cells": 1}, {"gamma": 1.0}, {"rho0": -1.0}, {"scheme": "rk4"}):
        try:
            PistonConfig(**bad)
        except ValidationError:
            pass
        else:
            raise AssertionError(f"{bad} should be rejected")


if __name__ == "__main__":
    test_settings_from_environment()
    test_run_config_defaults()
    test_normalized_round_trip()
    test_invalid_run_configs()
    test_overrides()
    test_load_flat_piston_config()
    test_load_full_run_config()
    test_piston_config_validation()
    print("\n✅ Config tests passed")
