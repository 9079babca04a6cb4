"""
Test script for the command-line interface.
Runs each command through typer's CliRunner into a temporary output directory.
"""
import sys
import tempfile
from pathlib import Path

import orjson
import pandas as pd
from typer.testing import CliRunner

# Add project root to path
sys.path.append(str(Path(__file__).parent))

from cli import app
from reporting import gradient_report, read_json
from trajectory_store import TrajectoryStore

runner = CliRunner()


def _invoke(*args):
    result = runner.invoke(app, [str(a) for a in args])
    if result.exception and not isinstance(result.exception, SystemExit):
        raise result.exception
    return result


def test_verify_tableaux():
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("verify-tableaux", "--out", tmp)
        assert result.exit_code == 0, result.output
        document = read_json(Path(tmp) / "tableaux.json")
    assert document["passed"] is True
    assert sorted(document["schemes"]) == ["imex1", "imex2", "imex3", "imex4"]


def test_simulate_linear_model():
    print("\n🚀 simulate --problem linear-model")
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("simulate", "--problem", "linear-model", "--scheme", "imex3", "--out", tmp)
        assert result.exit_code == 0, result.output
        summary = read_json(Path(tmp) / "summary.json")
        frame = pd.read_csv(Path(tmp) / "time_series.csv")
    assert summary["problem"] == "linear-model" and summary["scheme"] == "imex3"
    assert summary["n_steps"] == 10 and summary["passed"] is True
    assert list(frame.columns) == ["t", "u1", "u2", "J_running"]
    assert len(frame) == 11
    assert frame["u1"].iloc[0] == 1.0 and frame["J_running"].iloc[0] == 0.0
    assert abs(frame["J_running"].iloc[-1] - summary["J"]) < 1e-12
    print(f"   ✅ J = {summary['J']:.6e}")


def test_simulate_empty_window():
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("simulate", "--problem", "scalar-decay", "--T", 0.0, "--out", tmp)
        assert result.exit_code == 0, result.output
        summary = read_json(Path(tmp) / "summary.json")
    assert summary["J"] == 0.0 and summary["n_steps"] == 0


def test_simulate_flat_piston_config():
    with tempfile.TemporaryDirectory() as tmp:
        config = Path(tmp) / "piston.json"
        config.write_bytes(orjson.dumps({"n_cells": 10, "mu_k": 2.0, "dt": 0.02, "T": 0.1, "scheme": "imex2"}))
        result = _invoke("simulate", "--config", config, "--out", tmp)
        assert result.exit_code == 0, result.output
        summary = read_json(Path(tmp) / "summary.json")
        frame = pd.read_csv(Path(tmp) / "time_series.csv")
    assert summary["problem"] == "piston" and summary["mu"] == [2.0]
    assert summary["scheme"] == "imex2" and summary["n_steps"] == 5
    assert {"u_s", "udot_s", "p_interface"} <= set(frame.columns)
    assert abs(frame["p_interface"].iloc[0] - 0.4) < 1e-12


def test_invalid_inputs_exit_nonzero():
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("simulate", "--problem", "linear-model", "--scheme", "imex9", "--out", tmp)
        assert result.exit_code != 0
        assert "imex1" in result.output and "imex4" in result.output

        config = Path(tmp) / "bad.json"
        config.write_bytes(orjson.dumps({"n_cells": 10, "colour": "blue"}))
        assert _invoke("simulate", "--config", config, "--out", tmp).exit_code != 0

        assert _invoke("simulate", "--problem", "linear-model", "--dt=-0.1", "--out", tmp).exit_code != 0


def test_grad_check_scalar_decay():
    print("\n🔍 grad-check --problem scalar-decay")
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("grad-check", "--problem", "scalar-decay", "--out", tmp)
        assert result.exit_code == 0, result.output
        document = read_json(Path(tmp) / "grad_check.json")
        norms = pd.read_csv(Path(tmp) / "lambda_norms_imex4.csv")
    assert document["passed"] is True
    report = document["reports"][0]
    assert {c["name"] for c in report["comparisons"]} == {"adjoint vs direct", "adjoint vs fd",
                                                          "adjoint vs closed form"}
    assert abs(report["gradients"]["closed_form"][0] + 0.296997) < 1e-6
    assert list(norms["n"]) == list(range(1001))
    print(f"   ✅ dJ/dmu = {report['gradients']['adjoint'][0]:.9f}")


def test_grad_check_all_schemes():
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("grad-check", "--problem", "linear-model", "--scheme", "all", "--out", tmp)
        assert result.exit_code == 0, result.output
        document = read_json(Path(tmp) / "grad_check.json")
        written = sorted(p.name for p in Path(tmp).glob("lambda_norms_*.csv"))
    assert [r["scheme"] for r in document["reports"]] == ["imex1", "imex2", "imex3", "imex4"]
    assert written == [f"lambda_norms_imex{k}.csv" for k in range(1, 5)]


def test_grad_check_writes_one_report_per_method():
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("grad-check", "--problem", "scalar-decay", "--out", tmp)
        assert result.exit_code == 0, result.output
        documents = {method: read_json(Path(tmp) / f"gradient_{method}_imex4.json")
                     for method in ("adjoint", "direct")}
        check = read_json(Path(tmp) / "grad_check.json")
    for method, document in documents.items():
        assert set(document) == {"scheme", "dt", "J", "grad", "method"}
        assert document["method"] == method and document["scheme"] == "imex4"
        assert len(document["grad"]) == 1
    adjoint, direct = documents["adjoint"]["grad"][0], documents["direct"]["grad"][0]
    assert abs(adjoint - direct) < 1e-10 * max(1.0, abs(adjoint))
    assert documents["adjoint"]["J"] == check["reports"][0]["J"]


def test_gradient_report_rejects_unknown_method():
    document = gradient_report("imex1", 0.1, 1.0, [0.5], "adjoint")
    assert document == {"scheme": "imex1", "dt": 0.1, "J": 1.0, "grad": [0.5], "method": "adjoint"}
    try:
        gradient_report("imex1", 0.1, 1.0, [0.5], "fd")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown gradient method accepted")


def test_grad_check_file_trajectory():
    with tempfile.TemporaryDirectory() as tmp:
        trajectory = Path(tmp) / "gc.imxtraj"
        config = Path(tmp) / "run.json"
        config.write_bytes(orjson.dumps({"problem": "linear-model", "scheme": "imex2",
                                         "trajectory": f"file:{trajectory}"}))
        result = _invoke("grad-check", "--config", config, "--out", tmp)
        assert result.exit_code == 0, result.output
        assert trajectory.exists()
        stored = TrajectoryStore.read(trajectory)
        document = read_json(Path(tmp) / "grad_check.json")
    assert document["passed"] is True
    assert len(stored) == 10
    assert abs(stored.total_qoi - document["reports"][0]["J"]) < 1e-12


def test_grad_check_detects_corrupted_jacobian():
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("grad-check", "--problem", "linear-model", "--corrupt-jacobian", 1.5, "--out", tmp)
        assert result.exit_code == 1
        document = read_json(Path(tmp) / "grad_check.json")
    assert document["passed"] is False
    failed = {c["name"] for c in document["reports"][0]["comparisons"] if not c["passed"]}
    assert "adjoint vs fd" in failed


def test_order_study():
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("order-study", "--out", tmp)
        assert result.exit_code == 0, result.output
        document = read_json(Path(tmp) / "order_study.json")
        frame = pd.read_csv(Path(tmp) / "order_study.csv")
    assert document["problem"] == "linear-model" and document["passed"] is True
    for name, entry in document["schemes"].items():
        assert abs(entry["fitted_order"] - entry["design_order"]) <= 0.4, name
    assert len(frame) == 16


def test_optimize_parameter_quadratic():
    print("\n🎯 optimize --problem linear-model --qoi parameter-quadratic")
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("optimize", "--problem", "linear-model", "--qoi", "parameter-quadratic", "--out", tmp)
        assert result.exit_code == 0, result.output
        summary = read_json(Path(tmp) / "optimization.json")
        trace = pd.read_csv(Path(tmp) / "optimization_trace.csv")
    assert summary["passed"] is True and summary["nonincreasing"] is True
    assert max(abs(v) for v in summary["mu"]) < 1e-6
    assert list(trace.columns[:6]) == ["iter", "mu_0", "mu_1", "mu_2", "mu_3", "J"]
    print(f"   ✅ {summary['iterations']} iterations")


def test_optimize_piston():
    print("\n🎯 optimize --problem piston")
    with tempfile.TemporaryDirectory() as tmp:
        result = _invoke("optimize", "--problem", "piston", "--out", tmp)
        assert result.exit_code == 0, result.output
        summary = read_json(Path(tmp) / "optimization.json")
        trace = pd.read_csv(Path(tmp) / "optimization_trace.csv")
    assert summary["passed"] is True and summary["nonincreasing"] is True
    J = trace["J"].to_numpy()
    assert (J[1:] <= J[:-1] + 1e-15).all()
    assert abs(summary["mu"][0] - 10.0) <= 1e-6 and summary["iterations"] <= 20
    print(f"   ✅ mu_k = {summary['mu'][0]:.6f}, J = {J[-1]:.6e}")


if __name__ == "__main__":
    test_verify_tableaux()
    test_simulate_linear_model()
    test_simulate_empty_window()
    test_simulate_flat_piston_config()
    test_invalid_inputs_exit_nonzero()
    test_grad_check_scalar_decay()
    test_grad_check_all_schemes()
    test_grad_check_writes_one_report_per_method()
    test_gradient_report_rejects_unknown_method()
    test_grad_check_file_trajectory()
    test_grad_check_detects_corrupted_jacobian()
    test_order_study()
    test_optimize_parameter_quadratic()
    test_optimize_piston()
    print("\n✅ CLI tests passed")
