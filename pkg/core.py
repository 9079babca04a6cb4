"""
Partitioned IMEX-RK forward integrator for coupled subsystem collections.

Each stage runs two sweeps over the ordered subsystems:
    A. implicit solve of M k_I = dt r(U, c_hat) with the weak Gauss-Seidel
       coupling predictor c_hat (current-stage states of earlier subsystems,
       previous-step states of the rest), Newton on the diagonal block only;
    B. explicit correction M k_E = dt [r(U, c(U_stage)) - r(U, c_hat)].
The quantity of interest is accumulated with the implicit weights and
abscissae so that its discrete gradient is exact.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import lu_factor, lu_solve

from config import get_settings
from errors import (
    ImexError, NewtonConvergenceError, NonFiniteStateError, SingularSystemError, TrajectoryMismatchError,
)
from tableaux import ImexTableauPair
from trajectory_store import StageRecord, TrajectoryLayout, TrajectoryStore

# per-subsystem state vectors u^1..u^m
PartitionedState = List[np.ndarray]

_STAGNATION_STEP = 1e-14
_STAGNATION_FACTOR = 1e3


class SubsystemModel(ABC):
    """
    One physical system of the coupled ODE  M du/dt = r(u, c(u_1..u_m), mu, t).

    Subclasses must be stateless with respect to evaluation (parameters come in
    through mu) so one instance can be evaluated from several threads.
    """

    name: str = "subsystem"
    state_dim: int = 0
    coupling_dim: int = 0

    def mass_matrix(self) -> np.ndarray:
        """Constant mass matrix (identity unless overridden)."""
        return np.eye(self.state_dim)

    @cached_property
    def _mass(self) -> Tuple[bool, Optional[tuple]]:
        mass = self.mass_matrix()
        if np.array_equal(mass, np.eye(self.state_dim)):
            return True, None
        return False, lu_factor(mass)

    def mass_apply(self, v: np.ndarray) -> np.ndarray:
        identity, _ = self._mass
        return np.array(v, dtype=float) if identity else self.mass_matrix() @ v

    def mass_solve(self, v: np.ndarray, transpose: bool = False) -> np.ndarray:
        identity, factor = self._mass
        if identity:
            return np.array(v, dtype=float)
        return lu_solve(factor, v, trans=1 if transpose else 0)

    @abstractmethod
    def residual(self, u: np.ndarray, c: np.ndarray, mu: np.ndarray, t: float) -> np.ndarray:
        ...

    @abstractmethod
    def coupling(self, states: Sequence[np.ndarray], mu: np.ndarray, t: float) -> np.ndarray:
        ...

    @abstractmethod
    def d_residual_d_state(self, u: np.ndarray, c: np.ndarray, mu: np.ndarray, t: float) -> np.ndarray:
        ...

    @abstractmethod
    def d_residual_d_coupling(self, u: np.ndarray, c: np.ndarray, mu: np.ndarray, t: float) -> np.ndarray:
        ...

    @abstractmethod
    def d_coupling_d_state(self, k: int, states: Sequence[np.ndarray], mu: np.ndarray, t: float) -> np.ndarray:
        ...

    def d_residual_d_param(self, u: np.ndarray, c: np.ndarray, mu: np.ndarray, t: float) -> np.ndarray:
        return np.zeros((self.state_dim, len(mu)))

    def d_coupling_d_param(self, states: Sequence[np.ndarray], mu: np.ndarray, t: float) -> np.ndarray:
        return np.zeros((self.coupling_dim, len(mu)))

    @abstractmethod
    def initial_state(self, mu: np.ndarray) -> np.ndarray:
        ...

    def d_initial_d_param(self, mu: np.ndarray) -> np.ndarray:
        return np.zeros((self.state_dim, len(mu)))


class QoiModel(ABC):
    """Integrand j(u_1..u_m, mu, t) of the objective J = int j dt."""

    @abstractmethod
    def integrand(self, states: Sequence[np.ndarray], mu: np.ndarray, t: float) -> float:
        ...

    @abstractmethod
    def d_integrand_d_state(self, i: int, states: Sequence[np.ndarray], mu: np.ndarray, t: float) -> np.ndarray:
        ...

    def d_integrand_d_param(self, states: Sequence[np.ndarray], mu: np.ndarray, t: float) -> np.ndarray:
        return np.zeros(len(mu))


class CoupledSystem:
    """Ordered subsystems plus the parameter vector they are evaluated at."""

    def __init__(self, subsystems: Sequence[SubsystemModel], mu: Sequence[float], name: str = "coupled"):
        if not subsystems:
            raise ValueError("a coupled system needs at least one subsystem")
        self._subsystems = tuple(subsystems)
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float)).copy()
        self.name = name

    @property
    def subsystems(self) -> Tuple[SubsystemModel, ...]:
        return self._subsystems

    @property
    def m(self) -> int:
        return len(self._subsystems)

    @property
    def n_mu(self) -> int:
        return len(self.mu)

    @property
    def state_dims(self) -> Tuple[int, ...]:
        return tuple(sub.state_dim for sub in self._subsystems)

    @property
    def coupling_dims(self) -> Tuple[int, ...]:
        return tuple(sub.coupling_dim for sub in self._subsystems)

    def with_mu(self, mu: Sequence[float]) -> "CoupledSystem":
        """Same subsystems evaluated at another parameter vector."""
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.mu = np.atleast_1d(np.asarray(mu, dtype=float)).copy()
        if clone.mu.shape != self.mu.shape:
            raise ValueError(f"expected {self.n_mu} parameters, got {clone.mu.size}")
        return clone

    def initial_state(self) -> PartitionedState:
        return [sub.initial_state(self.mu).astype(float) for sub in self._subsystems]

    def layout(self, s: int) -> TrajectoryLayout:
        return TrajectoryLayout(s=s, state_dims=self.state_dims, coupling_dims=self.coupling_dims, n_mu=self.n_mu)


@dataclass
class NewtonOptions:
    """Stage-solve policy; the tolerance is scaled by the step size."""

    tol: float = 1e-12
    max_iter: int = 50

    @classmethod
    def from_settings(cls) -> "NewtonOptions":
        settings = get_settings()
        return cls(tol=settings.newton_tol, max_iter=settings.newton_max_iter)


def factorize(matrix: np.ndarray, what: str = "linear system"):
    """Dense LU with partial pivoting; exact zero pivots raise SingularSystemError."""
    lu, piv = lu_factor(matrix, check_finite=False)
    diagonal = np.diag(lu)
    if not np.all(np.isfinite(lu)) or np.any(diagonal == 0.0):
        raise SingularSystemError(f"singular {what}")
    return lu, piv


def _require_finite(array: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NonFiniteStateError(f"non-finite values in {what}")


def predictor_eval(sys: CoupledSystem, i: int, stage_states: Sequence[np.ndarray],
                   prev_state: Sequence[np.ndarray], mu: np.ndarray, t: float) -> np.ndarray:
    """
    Weak Gauss-Seidel coupling predictor for subsystem i (0-based).

    Args:
        sys: coupled system
        i: subsystem index
        stage_states: current-stage states of subsystems 0..i-1 (extra entries ignored)
        prev_state: step-start states of all subsystems
        mu: parameters
        t: stage time

    Returns:
        np.ndarray: c^i(U^0..U^{i-1}, u^i_prev..u^{m-1}_prev)
    """
    return sys.subsystems[i].coupling(predictor_arguments(i, stage_states, prev_state), mu, t)


def predictor_arguments(i: int, stage_states: Sequence[np.ndarray],
                        prev_state: Sequence[np.ndarray]) -> List[np.ndarray]:
    if len(stage_states) < i:
        raise ValueError(f"predictor for subsystem {i} needs {i} current-stage states, got {len(stage_states)}")
    return list(stage_states[:i]) + list(prev_state[i:])


def solve_stage(model: SubsystemModel, seed: np.ndarray, diag: float, dt: float, c_hat: np.ndarray,
                mu: np.ndarray, t: float, newton: NewtonOptions,
                stage: int = 0, index: int = 0) -> Tuple[np.ndarray, int]:
    """
    Solve M k - dt r(seed + diag k, c_hat) = 0 for the implicit stage velocity k.

    A zero diagonal coefficient makes the stage explicit: k = dt M^{-1} r(seed).

    Returns:
        Tuple[np.ndarray, int]: stage velocity and Newton iterations used
    """
    if diag == 0.0:
        k = dt * model.mass_solve(model.residual(seed, c_hat, mu, t))
        return k, 0

    tol = newton.tol * dt
    mass = model.mass_matrix()
    k = np.zeros_like(seed)
    stalled = False
    norm = np.inf
    for iteration in range(newton.max_iter + 1):
        u = seed + diag * k
        residual = model.mass_apply(k) - dt * model.residual(u, c_hat, mu, t)
        _require_finite(residual, f"stage {stage} residual of subsystem {index}")
        norm = float(np.max(np.abs(residual), initial=0.0))
        if norm <= tol or (stalled and norm <= _STAGNATION_FACTOR * tol):
            if stalled and norm > tol:
                logger.warning(f"Newton stagnated at round-off: stage {stage}, subsystem {index}, |F|={norm:.2e}")
            return k, iteration
        if iteration == newton.max_iter:
            break
        jacobian = mass - dt * diag * model.d_residual_d_state(u, c_hat, mu, t)
        delta = lu_solve(factorize(jacobian, f"stage {stage} Newton matrix of subsystem {index}"), -residual)
        k = k + delta
        stalled = np.max(np.abs(delta), initial=0.0) <= _STAGNATION_STEP * (1.0 + np.max(np.abs(k), initial=0.0))

    raise NewtonConvergenceError(stage=stage, subsystem=index, residual_norm=norm, iterations=newton.max_iter)


def step(sys: CoupledSystem, tab: ImexTableauPair, qoi: QoiModel, state: Sequence[np.ndarray],
         t_prev: float, dt: float, step_index: int = 1,
         newton: Optional[NewtonOptions] = None) -> Tuple[PartitionedState, float, StageRecord]:
    """
    Advance the coupled system by one partitioned IMEX-RK step.

    Args:
        sys: coupled system (subsystem order defines the predictor)
        tab: tableau pair
        qoi: objective integrand
        state: u_{n-1} per subsystem
        t_prev: t_{n-1}
        dt: step size (> 0)
        step_index: n, stored in the record
        newton: stage-solve options (defaults from settings)

    Returns:
        Tuple: (u_n, objective increment, StageRecord)
    """
    if dt <= 0.0:
        raise ValueError(f"step size must be positive, got {dt}")
    if len(state) != sys.m or any(len(u) != d for u, d in zip(state, sys.state_dims)):
        raise ValueError("state dimensions do not match the coupled system")
    newton = newton or NewtonOptions.from_settings()

    mu = sys.mu
    s, m = tab.s, sys.m
    u_prev = [np.asarray(u, dtype=float) for u in state]
    stage_times = t_prev + tab.c * dt

    stages: List[List[np.ndarray]] = [[None] * m for _ in range(s)]
    k_imp: List[List[np.ndarray]] = [[None] * m for _ in range(s)]
    k_exp: List[List[np.ndarray]] = [[None] * m for _ in range(s)]
    predictors: List[List[np.ndarray]] = [[None] * m for _ in range(s)]

    for j in range(s):
        t_stage = stage_times[j]
        diag = tab.a[j, j]

        # sweep A: implicit solves in subsystem order
        for i, model in enumerate(sys.subsystems):
            seed = u_prev[i].copy()
            for p in range(j):
                if tab.a_hat[j, p] != 0.0:
                    seed += tab.a_hat[j, p] * k_exp[p][i]
                if tab.a[j, p] != 0.0:
                    seed += tab.a[j, p] * k_imp[p][i]
            c_hat = predictor_eval(sys, i, stages[j], u_prev, mu, t_stage)
            predictors[j][i] = c_hat
            k, iterations = solve_stage(model, seed, diag, dt, c_hat, mu, t_stage, newton, stage=j, index=i)
            k_imp[j][i] = k
            stages[j][i] = seed + diag * k
            _require_finite(stages[j][i], f"stage {j} state of subsystem {i}")
            logger.trace(f"stage {j} subsystem {i}: {iterations} Newton iterations")

        # sweep B: explicit coupling correction with the full stage state
        for i, model in enumerate(sys.subsystems):
            c_full = model.coupling(stages[j], mu, t_stage)
            split = model.residual(stages[j][i], c_full, mu, t_stage) - \
                model.residual(stages[j][i], predictors[j][i], mu, t_stage)
            k_exp[j][i] = dt * model.mass_solve(split)
            _require_finite(k_exp[j][i], f"stage {j} explicit velocity of subsystem {i}")

    u_next = []
    for i in range(m):
        u = u_prev[i].copy()
        for p in range(s):
            if tab.b_hat[p] != 0.0:
                u += tab.b_hat[p] * k_exp[p][i]
            if tab.b[p] != 0.0:
                u += tab.b[p] * k_imp[p][i]
        u_next.append(u)

    increment = 0.0
    for p in range(s):
        if tab.b[p] != 0.0:
            increment += tab.b[p] * qoi.integrand(stages[p], mu, stage_times[p])
    increment *= dt

    record = StageRecord(
        step=step_index,
        t_start=float(t_prev),
        dt=float(dt),
        qoi_increment=float(increment),
        stage_times=np.asarray(stage_times, dtype=float),
        u_start=[u.copy() for u in u_prev],
        u_end=[u.copy() for u in u_next],
        stage_states=stages,
        k_implicit=k_imp,
        k_explicit=k_exp,
        predictors=predictors,
    )
    return u_next, increment, record


def make_time_grid(t0: float, T: float, dt: float) -> np.ndarray:
    """Uniform grid from t0 to exactly T with step at most dt."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if T < t0:
        raise ValueError(f"final time {T} precedes start time {t0}")
    n_steps = int(np.ceil((T - t0) / dt - 1e-9)) if T > t0 else 0
    return np.linspace(t0, T, n_steps + 1)


def integrate(sys: CoupledSystem, tab: ImexTableauPair, qoi: QoiModel, t_grid: Sequence[float],
              store: Optional[TrajectoryStore] = None,
              newton: Optional[NewtonOptions] = None) -> Tuple[PartitionedState, float, TrajectoryStore]:
    """
    Integrate from u_0 = initial_state(mu) over the time grid.

    Args:
        sys: coupled system
        tab: tableau pair
        qoi: objective integrand
        t_grid: strictly increasing t_0..t_{N_t}
        store: trajectory backend (memory store if omitted)
        newton: stage-solve options

    Returns:
        Tuple: (final state, J, trajectory store)
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("time grid must be a non-empty 1D sequence")
    if np.any(np.diff(t_grid) <= 0.0):
        raise ValueError("time grid must be strictly increasing")
    newton = newton or NewtonOptions.from_settings()
    store = store if store is not None else TrajectoryStore()

    state = sys.initial_state()
    store.start(sys.layout(tab.s), sys.mu, state)
    n_steps = t_grid.size - 1
    logger.info(f"Integrating {sys.name} with {tab.name}: {n_steps} steps on [{t_grid[0]}, {t_grid[-1]}]")

    total = 0.0
    for n in range(1, n_steps + 1):
        try:
            state, increment, record = step(sys, tab, qoi, state, t_grid[n - 1], t_grid[n] - t_grid[n - 1],
                                            step_index=n, newton=newton)
        except ImexError as exc:
            raise exc.at_step(n)
        total += increment
        store.append(record)

    logger.info(f"Integration done: J = {total:.11e}")
    return state, total, store


@dataclass
class SubsystemLinearization:
    """
    Partial derivatives of one subsystem at one stage.

    g is the implicit velocity r(U^i, c_hat^i) and f = r(U^i, c(U)) - r(U^i, c_hat^i)
    the explicit split velocity; p_u[k] are predictor partials at the predictor
    arguments (current stage for k < i, step start for k >= i).
    """

    g_u: np.ndarray
    g_c: np.ndarray
    g_mu: np.ndarray
    f_u: List[np.ndarray]
    f_c: np.ndarray
    f_mu: np.ndarray
    p_u: List[np.ndarray]
    p_mu: np.ndarray
    j_u: np.ndarray


@dataclass
class StageLinearization:
    stage: int
    t: float
    subsystems: List[SubsystemLinearization] = field(default_factory=list)
    j_mu: Optional[np.ndarray] = None


def linearize_stage(sys: CoupledSystem, qoi: QoiModel, record: StageRecord, j: int) -> StageLinearization:
    """Jacobian blocks of stage j of a recorded step, shared by the direct and adjoint sweeps."""
    mu = sys.mu
    t = float(record.stage_times[j])
    stage = record.stage_states[j]
    lin = StageLinearization(stage=j, t=t, j_mu=np.asarray(qoi.d_integrand_d_param(stage, mu, t), dtype=float))

    for i, model in enumerate(sys.subsystems):
        u = stage[i]
        c_hat = record.predictors[j][i]
        c_full = model.coupling(stage, mu, t)

        g_u = model.d_residual_d_state(u, c_hat, mu, t)
        g_c = model.d_residual_d_coupling(u, c_hat, mu, t)
        g_mu = model.d_residual_d_param(u, c_hat, mu, t)
        if np.array_equal(c_full, c_hat):
            r_u, r_c, r_mu = g_u, g_c, g_mu
        else:
            r_u = model.d_residual_d_state(u, c_full, mu, t)
            r_c = model.d_residual_d_coupling(u, c_full, mu, t)
            r_mu = model.d_residual_d_param(u, c_full, mu, t)

        f_u = []
        for k in range(sys.m):
            block = r_c @ model.d_coupling_d_state(k, stage, mu, t)
            if k == i:
                block = block + r_u - g_u
            f_u.append(block)
        f_mu = r_mu + r_c @ model.d_coupling_d_param(stage, mu, t) - g_mu

        args = predictor_arguments(i, stage, record.u_start)
        p_u = [model.d_coupling_d_state(k, args, mu, t) for k in range(sys.m)]
        p_mu = model.d_coupling_d_param(args, mu, t)

        lin.subsystems.append(SubsystemLinearization(
            g_u=g_u, g_c=g_c, g_mu=g_mu,
            f_u=f_u, f_c=-g_c, f_mu=f_mu,
            p_u=p_u, p_mu=p_mu,
            j_u=np.asarray(qoi.d_integrand_d_state(i, stage, mu, t), dtype=float),
        ))
    return lin


def check_trajectory(sys: CoupledSystem, tab: ImexTableauPair, store: TrajectoryStore) -> None:
    """Raise TrajectoryMismatchError unless the store was produced for this system and scheme."""
    if store.layout is None:
        raise TrajectoryMismatchError("trajectory store is empty (integrate was not run)")
    expected = sys.layout(tab.s)
    if store.layout != expected:
        raise TrajectoryMismatchError(f"trajectory layout {store.layout} does not match system layout {expected}")
    if not np.array_equal(store.mu, sys.mu):
        raise TrajectoryMismatchError("trajectory was recorded at a different parameter vector")
