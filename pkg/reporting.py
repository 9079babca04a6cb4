"""
CSV and JSON artifacts written by the CLI: time series, gradient reports,
lambda-norm diagnostics, order studies and optimization traces.
"""
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
import orjson
import pandas as pd
from loguru import logger

from trajectory_store import TrajectoryStore

_JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS


def _default(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_json(data: Dict[str, Any], path: Path) -> Path:
    """Write a JSON document (numpy arrays and scalars allowed)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(data, default=_default, option=_JSON_OPTIONS))
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: Path) -> Dict[str, Any]:
    return orjson.loads(Path(path).read_bytes())


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def time_series_frame(store: TrajectoryStore, columns: Dict[str, Callable[[Sequence[np.ndarray]], float]],
                      t0: float = 0.0) -> pd.DataFrame:
    """
    One row per time level t_0..t_{N_t}: t, the requested columns and J_running.

    Args:
        store: trajectory from integrate
        columns: name -> function of the per-subsystem states
        t0: start time (used for the row of u_0)

    Returns:
        pd.DataFrame: time series
    """
    rows = []
    running = 0.0

    def row(t: float, states: Sequence[np.ndarray]) -> dict:
        values = {"t": t}
        values.update({name: fn(states) for name, fn in columns.items()})
        values["J_running"] = running
        return values

    rows.append(row(t0, store.initial_state))
    for record in store:
        running += record.qoi_increment
        rows.append(row(record.t_start + record.dt, record.u_end))
    return pd.DataFrame(rows)


def lambda_norm_frame(lambda_norms: List[Tuple[int, List[float]]], names: Sequence[str]) -> pd.DataFrame:
    """Per-step ||lambda_n||_2 per subsystem, rows ordered n = 0..N_t."""
    rows = [{"n": n, **{f"lambda_{name}": value for name, value in zip(names, norms)}}
            for n, norms in sorted(lambda_norms)]
    return pd.DataFrame(rows)


def state_norms(states: Sequence[np.ndarray], names: Sequence[str]) -> Dict[str, float]:
    return {name: float(np.linalg.norm(u)) for name, u in zip(names, states)}


GRADIENT_METHODS = ("direct", "adjoint")


def gradient_report(scheme: str, dt: float, J: float, grad: np.ndarray, method: str) -> Dict[str, Any]:
    """
    Gradient report document {scheme, dt, J, grad, method}.

    Args:
        scheme: tableau name
        dt: step size
        J: objective value
        grad: dJ/dmu
        method: "direct" or "adjoint"

    Returns:
        dict: report
    """
    if method not in GRADIENT_METHODS:
        raise ValueError(f"unknown gradient method '{method}', expected one of {', '.join(GRADIENT_METHODS)}")
    return {
        "scheme": scheme,
        "dt": float(dt),
        "J": float(J),
        "grad": np.atleast_1d(np.asarray(grad, dtype=float)).tolist(),
        "method": method,
    }


def gradient_check_report(scheme: str, dt: float, J: float, gradients: Dict[str, np.ndarray],
                          comparisons: Sequence[Dict[str, Any]] = ()) -> Dict[str, Any]:
    """
    Cross-check of every gradient of one run.

    Args:
        scheme: tableau name
        dt: step size
        J: objective value
        gradients: method name ("adjoint", "direct", "fd", "closed_form") -> dJ/dmu
        comparisons: GradientComparison.to_dict() entries

    Returns:
        dict: report with a top-level "passed" flag
    """
    return {
        "scheme": scheme,
        "dt": dt,
        "J": J,
        "gradients": {name: np.atleast_1d(np.asarray(grad, dtype=float)).tolist()
                      for name, grad in gradients.items()},
        "comparisons": list(comparisons),
        "passed": all(entry["passed"] for entry in comparisons),
    }


def observed_orders(dts: Sequence[float], errors: Sequence[float]) -> Tuple[List[float], float]:
    """
    Observed orders between successive refinements and the least-squares slope
    of log(error) against log(dt). Zero errors (round-off floor) are skipped.
    """
    pairs = [(dt, err) for dt, err in zip(dts, errors) if err > 0.0]
    successive = [float(np.log(e0 / e1) / np.log(d0 / d1)) for (d0, e0), (d1, e1) in zip(pairs, pairs[1:])]
    if len(pairs) < 2:
        return successive, float("nan")
    slope = np.polyfit(np.log([p[0] for p in pairs]), np.log([p[1] for p in pairs]), 1)[0]
    return successive, float(slope)


def order_study_frame(results: Dict[str, List[Tuple[float, float]]]) -> pd.DataFrame:
    """scheme, dt, error, observed order (against the previous dt) rows."""
    rows = []
    for scheme, entries in results.items():
        dts = [dt for dt, _ in entries]
        errors = [err for _, err in entries]
        for k, (dt, err) in enumerate(entries):
            order = np.nan
            if k > 0 and errors[k] > 0.0 and errors[k - 1] > 0.0:
                order = float(np.log(errors[k - 1] / errors[k]) / np.log(dts[k - 1] / dts[k]))
            rows.append({"scheme": scheme, "dt": dt, "error": err, "order": order})
    return pd.DataFrame(rows)
