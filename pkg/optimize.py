"""
Finite-difference gradient oracle and box-constrained projected quasi-Newton optimizer.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from adjoint import gradient_adjoint
from config import get_settings
from core import CoupledSystem, NewtonOptions, QoiModel, integrate
from errors import ImexError, LineSearchError, NonFiniteObjectiveError
from sensitivity import gradient_direct
from tableaux import ImexTableauPair

ObjectiveFn = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass
class BoxConstraints:
    """lower <= mu <= upper componentwise (infinite bounds allowed)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper bounds must have the same length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def unbounded(cls, n: int) -> "BoxConstraints":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def projected_gradient(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        return x - self.project(x - g)


@dataclass
class IterationRecord:
    iteration: int
    mu: np.ndarray
    J: float
    pg_norm: float
    step: float
    method: str
    grad: np.ndarray
    checks: Dict[str, float] = field(default_factory=dict)


@dataclass
class OptimizationTrace:
    """Accepted iterates in order."""

    records: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    def to_frame(self) -> pd.DataFrame:
        """Columns iter, mu_0..mu_{n-1}, J, pg_norm, step, method and any cross checks."""
        rows = []
        for rec in self.records:
            row = {"iter": rec.iteration}
            row.update({f"mu_{k}": float(v) for k, v in enumerate(rec.mu)})
            row.update({"J": rec.J, "pg_norm": rec.pg_norm, "step": rec.step, "method": rec.method})
            row.update(rec.checks)
            rows.append(row)
        return pd.DataFrame(rows)

    def summary(self) -> dict:
        last = self.records[-1] if self.records else None
        return {
            "converged": self.converged,
            "message": self.message,
            "iterations": self.iterations,
            "mu": None if last is None else last.mu.tolist(),
            "J": None if last is None else last.J,
            "pg_norm": None if last is None else last.pg_norm,
            "objective_history": [rec.J for rec in self.records],
        }


class MinimizeOptions(BaseModel):
    """Stopping and line-search parameters of minimize."""

    model_config = ConfigDict(extra="forbid")

    max_iter: int = Field(default=100, ge=0)
    pg_tol: float = Field(default=1e-8, gt=0.0)
    armijo: float = Field(default=1e-4, gt=0.0, lt=1.0)
    min_step: float = Field(default=1e-12, gt=0.0)
    method: str = "adjoint"


def gradient_fd(sys: CoupledSystem, tab: ImexTableauPair, qoi: QoiModel, t_grid: Sequence[float],
                eps: Optional[float] = None, n_jobs: Optional[int] = None,
                newton: Optional[NewtonOptions] = None) -> np.ndarray:
    """
    Central finite-difference gradient (J(mu + eps e_k) - J(mu - eps e_k)) / (2 eps).

    Args:
        sys: coupled system at mu
        tab: tableau pair
        qoi: objective integrand
        t_grid: time grid
        eps: perturbation (settings default)
        n_jobs: concurrent integrations (threads); results reduced in component order

    Returns:
        np.ndarray: dJ/dmu
    """
    settings = get_settings()
    eps = settings.fd_eps if eps is None else eps
    n_jobs = settings.fd_n_jobs if n_jobs is None else n_jobs
    if eps <= 0.0:
        raise ValueError(f"finite-difference step must be positive, got {eps}")
    newton = newton or NewtonOptions.from_settings()

    def evaluate(k: int, sign: float) -> float:
        mu = sys.mu.copy()
        mu[k] += sign * eps
        try:
            _, J, _ = integrate(sys.with_mu(mu), tab, qoi, t_grid, newton=newton)
        except ImexError as exc:
            exc.message = f"{exc.message} (finite difference on component {k}, sign {sign:+.0f})"
            raise
        return J

    tasks = [(k, sign) for k in range(sys.n_mu) for sign in (1.0, -1.0)]
    values = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(evaluate)(k, sign) for k, sign in tasks)
    grad = np.array([(values[2 * k] - values[2 * k + 1]) / (2.0 * eps) for k in range(sys.n_mu)])
    logger.info(f"Finite-difference gradient (eps={eps:g}): {np.array2string(grad, precision=11)}")
    return grad


def make_objective(sys: CoupledSystem, tab: ImexTableauPair, qoi: QoiModel, t_grid: Sequence[float],
                   method: str = "adjoint") -> ObjectiveFn:
    """mu -> (J, dJ/dmu) by the adjoint, direct or finite-difference gradient."""
    if method not in ("adjoint", "direct", "fd"):
        raise ValueError(f"unknown gradient method '{method}'")

    def objective(mu: np.ndarray) -> Tuple[float, np.ndarray]:
        system = sys.with_mu(mu)
        if method == "direct":
            return gradient_direct(system, tab, qoi, t_grid)
        _, J, store = integrate(system, tab, qoi, t_grid)
        if method == "fd":
            return J, gradient_fd(system, tab, qoi, t_grid)
        return gradient_adjoint(system, tab, qoi, store)

    return objective


def _evaluate(fun: ObjectiveFn, x: np.ndarray) -> Tuple[float, np.ndarray]:
    value, grad = fun(x)
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteObjectiveError(f"non-finite objective or gradient at mu = {x}")
    return float(value), grad


def _scaled_identity(n: int, g: np.ndarray, free: np.ndarray,
                     pair: Optional[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Initial inverse Hessian: s.y / y.y over the free coordinates, else 1 / |g_free|."""
    if pair is not None:
        s_vec, y_vec = (np.where(free, v, 0.0) for v in pair)
        sy, yy = float(s_vec @ y_vec), float(y_vec @ y_vec)
        if sy > 0.0 and yy > 0.0:
            return np.eye(n) * (sy / yy)
    return np.eye(n) / max(np.linalg.norm(g[free]), np.finfo(float).tiny)


def minimize(fun: ObjectiveFn, mu0: Sequence[float], box: BoxConstraints,
             options: Optional[MinimizeOptions] = None,
             callback: Optional[Callable[[int, np.ndarray, float, np.ndarray], Dict[str, float]]] = None
             ) -> Tuple[np.ndarray, OptimizationTrace]:
    """
    Projected BFGS with Armijo backtracking on the free variables.

    A variable is held at a bound when it sits on it and the gradient pushes
    outward. Iterates are always projected onto the box.

    Args:
        fun: mu -> (J, dJ/dmu)
        mu0: start point inside the box
        box: bound constraints
        options: stopping and line-search parameters
        callback: called on every accepted iterate, returns extra trace columns

    Returns:
        Tuple: (mu*, OptimizationTrace)

    Raises:
        LineSearchError: step underflow, carries the last iterate
        NonFiniteObjectiveError: NaN/Inf at the start point
    """
    options = options or MinimizeOptions()
    x = np.atleast_1d(np.asarray(mu0, dtype=float)).copy()
    if not box.contains(x):
        raise ValueError(f"start point {x} lies outside the box")

    trace = OptimizationTrace()
    f, g = _evaluate(fun, x)
    n = x.size
    H = None
    held_before = None
    pair = None

    def record(iteration: int, step: float) -> float:
        pg_norm = float(np.linalg.norm(box.projected_gradient(x, g), np.inf))
        checks = callback(iteration, x.copy(), f, g.copy()) if callback else {}
        trace.append(IterationRecord(iteration=iteration, mu=x.copy(), J=f, pg_norm=pg_norm, step=step,
                                     method=options.method, grad=g.copy(), checks=checks or {}))
        logger.info(f"iter {iteration:3d}: mu={np.array2string(x, precision=8)} J={f:.11e} |pg|={pg_norm:.3e}")
        return pg_norm

    pg_norm = record(0, 0.0)
    for iteration in range(1, options.max_iter + 1):
        if pg_norm <= options.pg_tol:
            break

        held = ((x <= box.lower) & (g > 0.0)) | ((x >= box.upper) & (g < 0.0))
        free = ~held
        # restart the curvature whenever the held set changes
        if H is None or not np.array_equal(held, held_before):
            if H is not None:
                logger.debug(f"Held set changed to {np.flatnonzero(held).tolist()}, resetting curvature")
            H = _scaled_identity(n, g, free, pair)
        held_before = held
        direction = np.zeros(n)
        direction[free] = -H[np.ix_(free, free)] @ g[free]
        if direction @ g >= 0.0:
            logger.debug("BFGS direction not a descent direction, resetting curvature")
            H = _scaled_identity(n, g, free, None)
            direction[free] = -H[np.ix_(free, free)] @ g[free]

        step = 1.0
        while True:
            trial = box.project(x + step * direction)
            try:
                f_trial, g_trial = _evaluate(fun, trial)
                accepted = f_trial <= f + options.armijo * (g @ (trial - x))
            except NonFiniteObjectiveError:
                accepted = False
            if accepted:
                break
            step *= 0.5
            if step < options.min_step:
                trace.message = "line search step underflow"
                raise LineSearchError(f"line search failed at iteration {iteration}", last_iterate=x.copy(),
                                      last_value=f, trace=trace)

        s_vec = np.where(free, trial - x, 0.0)
        y_vec = np.where(free, g_trial - g, 0.0)
        pair = (s_vec, y_vec)
        curvature = s_vec @ y_vec
        if curvature > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            rho = 1.0 / curvature
            V = np.eye(n) - rho * np.outer(s_vec, y_vec)
            H = V @ H @ V.T + rho * np.outer(s_vec, s_vec)

        x, f, g = trial, f_trial, g_trial
        pg_norm = record(iteration, step)

    trace.converged = pg_norm <= options.pg_tol
    trace.message = "projected gradient below tolerance" if trace.converged else "iteration limit reached"
    logger.info(f"Optimization finished after {trace.iterations} iterations: {trace.message}")
    return x, trace
