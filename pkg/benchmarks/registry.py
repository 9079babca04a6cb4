"""
Maps a RunConfig to a ready-to-run problem (system, QoI, scheme, grid, bounds).
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from benchmarks.linear import LinearCoupledModel, build_linear_model
from benchmarks.piston import PISTON_BOUNDS, build_piston, piston_qoi
from benchmarks.qoi import (
    ConstantQoi, HalfSquaredNormQoi, ParameterLinearQoi, ParameterQuadraticQoi, SquaredComponentQoi,
)
from benchmarks.scalar import build_scalar_decay, scalar_decay_gradient, scalar_decay_objective
from config import RunConfig
from core import CoupledSystem, QoiModel, make_time_grid
from optimize import BoxConstraints
from tableaux import ImexTableauPair, get_scheme

QOI_NAMES = ("displacement-squared", "squared-state", "half-norm", "parameter-quadratic",
             "parameter-linear", "constant")

# problem -> (scheme, dt, T, default qoi)
_DEFAULTS = {
    "piston": (None, None, None, "displacement-squared"),
    "linear-model": ("imex2", 0.1, 1.0, "half-norm"),
    "scalar-decay": ("imex4", 1e-3, 1.0, "squared-state"),
}

Column = Callable[[Sequence[np.ndarray]], float]


@dataclass
class Problem:
    name: str
    system: CoupledSystem
    qoi: QoiModel
    qoi_name: str
    tab: ImexTableauPair
    dt: float
    T: float
    t0: float
    box: BoxConstraints
    columns: Dict[str, Column] = field(default_factory=dict)
    # mu -> (J, dJ/dmu) of the time-continuous problem, when known
    closed_form: Optional[Callable[[np.ndarray], Tuple[float, np.ndarray]]] = None

    @property
    def t_grid(self) -> np.ndarray:
        return make_time_grid(self.t0, self.T, self.dt)

    def with_scheme(self, scheme: str) -> "Problem":
        clone = Problem(**self.__dict__)
        clone.tab = get_scheme(scheme)
        return clone

    def with_dt(self, dt: float) -> "Problem":
        clone = Problem(**self.__dict__)
        clone.dt = dt
        return clone


def _qoi(name: str, problem: str, config: RunConfig) -> QoiModel:
    if name == "displacement-squared":
        if problem != "piston":
            raise ValueError("qoi 'displacement-squared' is only defined for the piston problem")
        return piston_qoi()
    if name == "squared-state":
        return SquaredComponentQoi(subsystem=0, index=0)
    if name == "half-norm":
        return HalfSquaredNormQoi()
    if name == "parameter-quadratic":
        target = config.linear.target if problem == "linear-model" else None
        return ParameterQuadraticQoi(target)
    if name == "parameter-linear":
        return ParameterLinearQoi()
    if name == "constant":
        return ConstantQoi(1.0)
    raise ValueError(f"unknown qoi '{name}', valid: {', '.join(QOI_NAMES)}")


def _box(config: RunConfig, default: Tuple[List[float], List[float]], n: int) -> BoxConstraints:
    lower = config.lower if config.lower is not None else default[0]
    upper = config.upper if config.upper is not None else default[1]
    if len(lower) != n or len(upper) != n:
        raise ValueError(f"bounds must have {n} entries")
    return BoxConstraints(lower, upper)


def _state_columns(system: CoupledSystem) -> Dict[str, Column]:
    columns = {}
    for i, sub in enumerate(system.subsystems):
        for k in range(sub.state_dim):
            label = f"{sub.name}[{k}]" if sub.state_dim > 1 else sub.name
            columns[label] = (lambda states, i=i, k=k: float(states[i][k]))
    return columns


def build_problem(config: RunConfig) -> Problem:
    """
    Build the problem described by a run configuration.

    Args:
        config: validated RunConfig

    Returns:
        Problem: system at the configured mu plus scheme, grid and bounds
    """
    scheme, dt, T, qoi_name = _DEFAULTS[config.problem]
    qoi_name = config.qoi or qoi_name
    closed_form = None

    if config.problem == "piston":
        piston = config.piston
        mu = config.mu if config.mu is not None else [piston.mu_k]
        if len(mu) != 1:
            raise ValueError("the piston problem has exactly one parameter (mu_k)")
        system = build_piston(mu[0], piston)
        scheme, dt, T = piston.scheme, piston.dt, piston.T
        columns = system.time_series_columns()
        box = _box(config, PISTON_BOUNDS, 1)

    elif config.problem == "linear-model":
        lin = config.linear
        system = build_linear_model([[lin.a11, lin.a12], [lin.a21, lin.a22]], lin.u0)
        if config.mu is not None:
            system = system.with_mu(config.mu)
        columns = _state_columns(system)
        box = _box(config, ([-5.0] * 4, [5.0] * 4), 4)

    else:
        mu = config.mu if config.mu is not None else [1.0]
        if len(mu) != 1:
            raise ValueError("the scalar-decay problem has exactly one parameter")
        system = build_scalar_decay(mu[0])
        columns = _state_columns(system)
        box = _box(config, ([0.0], [10.0]), 1)
    T = config.T if config.T is not None else T
    if config.problem == "scalar-decay" and qoi_name == "squared-state":
        span = T - config.t0
        closed_form = (lambda m: (scalar_decay_objective(m[0], span),
                                  np.array([scalar_decay_gradient(m[0], span)])))

    return Problem(
        name=config.problem,
        system=system,
        qoi=_qoi(qoi_name, config.problem, config),
        qoi_name=qoi_name,
        tab=get_scheme(config.scheme or scheme),
        dt=config.dt or dt,
        T=T,
        t0=config.t0,
        box=box,
        columns=columns,
        closed_form=closed_form,
    )


def order_study_reference(problem: Problem) -> Callable[[float], np.ndarray]:
    """Exact state after an elapsed time, as a flat vector, for problems that have one."""
    system = problem.system
    if isinstance(system, LinearCoupledModel):
        return system.analytic_solution
    if problem.name == "scalar-decay":
        mu = system.mu[0]
        u0 = system.subsystems[0].u0
        return lambda elapsed: np.array([u0 * np.exp(-mu * elapsed)])
    raise ValueError(f"problem '{problem.name}' has no analytic solution for an order study")
