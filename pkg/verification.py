"""
Verification harness shared by the tests and the grad-check command.

- FD-vs-analytic Jacobian checks for SubsystemModel and QoiModel implementations
- gradient comparison with mixed absolute/relative tolerances
- Taylor remainder test
- a Jacobian-corrupting subsystem wrapper used as a negative control
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from loguru import logger

from core import CoupledSystem, QoiModel, SubsystemModel


@dataclass
class JacobianCheck:
    """Analytic block vs central finite differences."""

    name: str
    max_error: float
    scale: float
    rel_tol: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.rel_tol * max(1.0, self.scale)


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, eps: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian of fun at x, one column per entry of x."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(x), dtype=float))
    jac = np.zeros((f0.size, x.size))
    for k in range(x.size):
        h = eps * (1.0 + abs(x[k]))
        plus, minus = x.copy(), x.copy()
        plus[k] += h
        minus[k] -= h
        jac[:, k] = (np.atleast_1d(fun(plus)) - np.atleast_1d(fun(minus))) / (2.0 * h)
    return jac


def _compare(name: str, analytic: np.ndarray, fd: np.ndarray, rel_tol: float) -> JacobianCheck:
    analytic = np.asarray(analytic, dtype=float).reshape(fd.shape)
    error = float(np.max(np.abs(analytic - fd), initial=0.0))
    scale = float(np.max(np.abs(fd), initial=0.0))
    return JacobianCheck(name=name, max_error=error, scale=scale, rel_tol=rel_tol)


def check_subsystem_jacobians(sys: CoupledSystem, index: int, states: Optional[Sequence[np.ndarray]] = None,
                              t: float = 0.0, eps: float = 1e-7, rel_tol: float = 1e-5) -> List[JacobianCheck]:
    """
    Check every Jacobian block of one subsystem against finite differences.

    Args:
        sys: coupled system providing mu and the other subsystems' states
        index: subsystem to check
        states: evaluation point (defaults to the initial state)
        t: evaluation time
        eps: relative FD step
        rel_tol: tolerance relative to max(1, max |FD entry|)

    Returns:
        List[JacobianCheck]: dr/du, dr/dc, dr/dmu, dc/du^k for every k, dc/dmu
    """
    model = sys.subsystems[index]
    mu = sys.mu.copy()
    states = [np.asarray(u, dtype=float).copy() for u in (states if states is not None else sys.initial_state())]
    u = states[index]
    c = np.asarray(model.coupling(states, mu, t), dtype=float)
    label = model.name

    checks = [
        _compare(f"{label} dr/du", model.d_residual_d_state(u, c, mu, t),
                 fd_jacobian(lambda x: model.residual(x, c, mu, t), u, eps), rel_tol),
        _compare(f"{label} dr/dmu", model.d_residual_d_param(u, c, mu, t),
                 fd_jacobian(lambda x: model.residual(u, c, x, t), mu, eps), rel_tol),
    ]
    if c.size:
        checks.append(_compare(f"{label} dr/dc", model.d_residual_d_coupling(u, c, mu, t),
                               fd_jacobian(lambda x: model.residual(u, x, mu, t), c, eps), rel_tol))

        for k in range(sys.m):
            def coupling_of(x, k=k):
                trial = list(states)
                trial[k] = x
                return model.coupling(trial, mu, t)

            checks.append(_compare(f"{label} dc/du[{sys.subsystems[k].name}]",
                                   model.d_coupling_d_state(k, states, mu, t),
                                   fd_jacobian(coupling_of, states[k], eps), rel_tol))
        checks.append(_compare(f"{label} dc/dmu", model.d_coupling_d_param(states, mu, t),
                               fd_jacobian(lambda x: model.coupling(states, x, t), mu, eps), rel_tol))

    for check in checks:
        if not check.passed:
            logger.warning(f"Jacobian mismatch {check.name}: {check.max_error:.3e} (scale {check.scale:.3e})")
    return checks


def check_qoi_partials(qoi: QoiModel, sys: CoupledSystem, states: Optional[Sequence[np.ndarray]] = None,
                       t: float = 0.0, eps: float = 1e-7, rel_tol: float = 1e-5) -> List[JacobianCheck]:
    """dj/du^i for every subsystem and dj/dmu against finite differences."""
    mu = sys.mu.copy()
    states = [np.asarray(u, dtype=float).copy() for u in (states if states is not None else sys.initial_state())]
    checks = []
    for i in range(sys.m):
        def integrand_of(x, i=i):
            trial = list(states)
            trial[i] = x
            return qoi.integrand(trial, mu, t)

        checks.append(_compare(f"dj/du[{sys.subsystems[i].name}]", qoi.d_integrand_d_state(i, states, mu, t),
                               fd_jacobian(integrand_of, states[i], eps), rel_tol))
    checks.append(_compare("dj/dmu", qoi.d_integrand_d_param(states, mu, t),
                           fd_jacobian(lambda x: qoi.integrand(states, x, t), mu, eps), rel_tol))
    return checks


@dataclass
class GradientComparison:
    """|candidate - reference| <= atol + rtol |reference| componentwise."""

    name: str
    reference: np.ndarray
    candidate: np.ndarray
    rtol: float
    atol: float = 0.0

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(np.asarray(self.candidate) - np.asarray(self.reference))

    @property
    def rel_error(self) -> np.ndarray:
        reference = np.abs(np.asarray(self.reference))
        return self.abs_error / np.where(reference > 0.0, reference, 1.0)

    @property
    def passed(self) -> bool:
        bound = self.atol + self.rtol * np.abs(np.asarray(self.reference))
        return bool(np.all(np.isfinite(self.candidate)) and np.all(self.abs_error <= bound))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_abs_error": float(np.max(self.abs_error, initial=0.0)),
            "max_rel_error": float(np.max(self.rel_error, initial=0.0)),
            "rtol": self.rtol,
            "atol": self.atol,
            "passed": self.passed,
        }


def compare_gradients(name: str, reference: Sequence[float], candidate: Sequence[float],
                      rtol: float, atol: float = 0.0) -> GradientComparison:
    comparison = GradientComparison(name=name, reference=np.atleast_1d(np.asarray(reference, dtype=float)),
                                    candidate=np.atleast_1d(np.asarray(candidate, dtype=float)),
                                    rtol=rtol, atol=atol)
    level = "INFO" if comparison.passed else "WARNING"
    logger.log(level, f"{name}: max rel error {np.max(comparison.rel_error, initial=0.0):.3e} "
                      f"({'ok' if comparison.passed else 'FAILED'})")
    return comparison


@dataclass
class TaylorResult:
    """Remainders |J(mu + h d) - J(mu)| and |J(mu + h d) - J(mu) - h g.d| for decreasing h."""

    steps: List[float]
    zeroth: List[float] = field(default_factory=list)
    first: List[float] = field(default_factory=list)

    @staticmethod
    def _orders(values: List[float], steps: List[float]) -> List[float]:
        return [float(np.log(values[k] / values[k + 1]) / np.log(steps[k] / steps[k + 1]))
                for k in range(len(values) - 1) if values[k] > 0.0 and values[k + 1] > 0.0]

    @property
    def zeroth_orders(self) -> List[float]:
        return self._orders(self.zeroth, self.steps)

    @property
    def first_orders(self) -> List[float]:
        return self._orders(self.first, self.steps)

    def min_first_order(self) -> float:
        orders = self.first_orders
        return min(orders) if orders else float("nan")


def taylor_test(objective: Callable[[np.ndarray], float], gradient: Sequence[float], mu: Sequence[float],
                direction: Optional[Sequence[float]] = None, h0: float = 1e-2, n_steps: int = 4) -> TaylorResult:
    """
    Taylor remainder convergence test of a gradient.

    With an exact gradient the first-order remainder decays like h^2, a wrong
    one leaves it at h^1.

    Args:
        objective: mu -> J
        gradient: dJ/dmu at mu
        mu: base point
        direction: perturbation direction (ones by default)
        h0: largest step, halved n_steps - 1 times

    Returns:
        TaylorResult: remainders and observed orders
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    direction = np.ones_like(mu) if direction is None else np.atleast_1d(np.asarray(direction, dtype=float))
    slope = float(np.dot(np.asarray(gradient, dtype=float), direction))
    J0 = objective(mu)

    result = TaylorResult(steps=[h0 / 2 ** k for k in range(n_steps)])
    for h in result.steps:
        Jh = objective(mu + h * direction)
        result.zeroth.append(abs(Jh - J0))
        result.first.append(abs(Jh - J0 - h * slope))
    logger.info(f"Taylor test orders: {np.round(result.first_orders, 3)}")
    return result


class CorruptedJacobianModel(SubsystemModel):
    """Delegates to a model but scales its dr/dmu; the forward solution is unchanged."""

    def __init__(self, base: SubsystemModel, factor: float):
        self.base = base
        self.factor = float(factor)
        self.name = base.name
        self.state_dim = base.state_dim
        self.coupling_dim = base.coupling_dim

    def mass_matrix(self):
        return self.base.mass_matrix()

    def residual(self, u, c, mu, t):
        return self.base.residual(u, c, mu, t)

    def coupling(self, states, mu, t):
        return self.base.coupling(states, mu, t)

    def d_residual_d_state(self, u, c, mu, t):
        return self.base.d_residual_d_state(u, c, mu, t)

    def d_residual_d_coupling(self, u, c, mu, t):
        return self.base.d_residual_d_coupling(u, c, mu, t)

    def d_coupling_d_state(self, k, states, mu, t):
        return self.base.d_coupling_d_state(k, states, mu, t)

    def d_residual_d_param(self, u, c, mu, t):
        return self.factor * np.asarray(self.base.d_residual_d_param(u, c, mu, t), dtype=float)

    def d_coupling_d_param(self, states, mu, t):
        return self.base.d_coupling_d_param(states, mu, t)

    def initial_state(self, mu):
        return self.base.initial_state(mu)

    def d_initial_d_param(self, mu):
        return self.base.d_initial_d_param(mu)


def corrupt_system(sys: CoupledSystem, factor: float) -> CoupledSystem:
    """Copy of sys whose subsystems all report dr/dmu scaled by factor."""
    logger.warning(f"Corrupting dr/dmu of {sys.name} by a factor {factor}")
    wrapped = [CorruptedJacobianModel(sub, factor) for sub in sys.subsystems]
    return CoupledSystem(wrapped, sys.mu, name=f"{sys.name}-corrupted")
