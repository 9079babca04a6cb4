"""
Fully discrete adjoint of the partitioned IMEX-RK scheme.

Sweeps the recorded trajectory backward, stage by stage and subsystem by
subsystem in reverse order, solving for the multipliers of the explicit
stages (kappa_E), implicit stages (kappa_I), stage states (tau), predictors
(sigma) and step states (lambda). The gradient costs one sweep whatever the
number of parameters.
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import lu_solve

from core import CoupledSystem, QoiModel, StageRecord, check_trajectory, factorize, linearize_stage
from errors import ImexError
from tableaux import ImexTableauPair
from trajectory_store import TrajectoryStore


@dataclass
class AdjointState:
    """Multipliers of one step; stage fields are indexed [stage][subsystem]."""

    lam: List[np.ndarray]
    kappa_implicit: List[List[np.ndarray]] = field(default_factory=list)
    kappa_explicit: List[List[np.ndarray]] = field(default_factory=list)
    tau: List[List[np.ndarray]] = field(default_factory=list)
    sigma: List[List[np.ndarray]] = field(default_factory=list)

    @classmethod
    def terminal(cls, sys: CoupledSystem) -> "AdjointState":
        return cls(lam=[np.zeros(d) for d in sys.state_dims])


@dataclass
class AdjointSolution:
    J: float
    grad: np.ndarray
    lam0: List[np.ndarray]
    # ||lambda_n||_2 per subsystem, rows ordered n = N_t .. 0
    lambda_norms: List[Tuple[int, List[float]]] = field(default_factory=list)


def sweep_adjoint_step(sys: CoupledSystem, tab: ImexTableauPair, qoi: QoiModel, record: StageRecord,
                       lam_next: List[np.ndarray]) -> Tuple[AdjointState, np.ndarray]:
    """
    Backward step: from lambda_n to lambda_{n-1} and the stage multipliers of step n.

    Args:
        sys: coupled system the record was produced with
        tab: tableau pair
        qoi: objective integrand
        record: forward StageRecord of step n
        lam_next: lambda_n per subsystem

    Returns:
        Tuple: (AdjointState holding lambda_{n-1} and stage multipliers, gradient increment)
    """
    s, m, dt = tab.s, sys.m, record.dt
    kI = [[None] * m for _ in range(s)]
    kE = [[None] * m for _ in range(s)]
    tau = [[None] * m for _ in range(s)]
    sigma = [[None] * m for _ in range(s)]
    lins = [None] * s
    grad = np.zeros(sys.n_mu)

    for j in reversed(range(s)):
        lin = linearize_stage(sys, qoi, record, j)
        lins[j] = lin
        diag = tab.a[j, j]

        # sweep A: explicit-stage multipliers
        for i in reversed(range(m)):
            rhs = tab.b_hat[j] * lam_next[i]
            for p in range(j + 1, s):
                if tab.a_hat[p, j] != 0.0:
                    rhs = rhs + tab.a_hat[p, j] * tau[p][i]
            kE[j][i] = sys.subsystems[i].mass_solve(rhs, transpose=True)

        # sweep B: implicit-stage, stage-state and predictor multipliers
        for i in reversed(range(m)):
            model = sys.subsystems[i]
            L = lin.subsystems[i]

            tau_tilde = dt * tab.b[j] * L.j_u
            for k in range(m):
                tau_tilde = tau_tilde + dt * (lin.subsystems[k].f_u[i].T @ kE[j][k])
            for p in range(i + 1, m):
                tau_tilde = tau_tilde + lin.subsystems[p].p_u[i].T @ sigma[j][p]

            rhs = tab.b[j] * lam_next[i] + diag * tau_tilde
            for p in range(j + 1, s):
                if tab.a[p, j] != 0.0:
                    rhs = rhs + tab.a[p, j] * tau[p][i]
            if diag == 0.0:
                kI[j][i] = model.mass_solve(rhs, transpose=True)
            else:
                matrix = model.mass_matrix() - dt * diag * L.g_u
                kI[j][i] = lu_solve(factorize(matrix, f"stage {j} adjoint matrix of subsystem {i}"), rhs, trans=1)

            tau[j][i] = tau_tilde + dt * (L.g_u.T @ kI[j][i])
            sigma[j][i] = dt * (L.g_c.T @ kI[j][i]) + dt * (L.f_c.T @ kE[j][i])
            grad += dt * (L.g_mu.T @ kI[j][i]) + dt * (L.f_mu.T @ kE[j][i]) + L.p_mu.T @ sigma[j][i]

        grad += dt * tab.b[j] * lin.j_mu

    lam_prev = []
    for i in range(m):
        lam = lam_next[i].copy()
        for j in range(s):
            lam += tau[j][i]
            # predictors of subsystems p <= i read u^i at the step start
            for p in range(i + 1):
                lam += lins[j].subsystems[p].p_u[i].T @ sigma[j][p]
        lam_prev.append(lam)

    state = AdjointState(lam=lam_prev, kappa_implicit=kI, kappa_explicit=kE, tau=tau, sigma=sigma)
    return state, grad


def adjoint_sweep(sys: CoupledSystem, tab: ImexTableauPair, qoi: QoiModel,
                  store: TrajectoryStore) -> AdjointSolution:
    """
    Full backward sweep over a recorded trajectory.

    Args:
        sys: coupled system (same mu as the recording)
        tab: tableau pair
        qoi: objective integrand
        store: trajectory from integrate

    Returns:
        AdjointSolution: J, dJ/dmu, lambda_0 and per-step lambda norms
    """
    check_trajectory(sys, tab, store)
    state = AdjointState.terminal(sys)
    grad = np.zeros(sys.n_mu)
    norms = [(len(store), [0.0] * sys.m)]

    for n in range(len(store), 0, -1):
        record = store.get(n)
        try:
            state, increment = sweep_adjoint_step(sys, tab, qoi, record, state.lam)
        except ImexError as exc:
            raise exc.at_step(n)
        grad += increment
        norms.append((n - 1, [float(np.linalg.norm(lam)) for lam in state.lam]))
        logger.trace(f"adjoint step {n}: |lambda| = {norms[-1][1]}")

    for sub, lam in zip(sys.subsystems, state.lam):
        du0 = np.asarray(sub.d_initial_d_param(sys.mu), dtype=float).reshape(sub.state_dim, sys.n_mu)
        grad += du0.T @ lam

    return AdjointSolution(J=store.total_qoi, grad=grad, lam0=state.lam, lambda_norms=norms)


def gradient_adjoint(sys: CoupledSystem, tab: ImexTableauPair, qoi: QoiModel,
                     trajectory: TrajectoryStore) -> Tuple[float, np.ndarray]:
    """
    Objective and its exact discrete gradient by the adjoint method.

    Args:
        sys: coupled system
        tab: tableau pair
        qoi: objective integrand
        trajectory: store produced by integrate with the same sys/tab/qoi/mu

    Returns:
        Tuple[float, np.ndarray]: (J, dJ/dmu)
    """
    solution = adjoint_sweep(sys, tab, qoi, trajectory)
    logger.info(f"Adjoint gradient ({tab.name}): {np.array2string(solution.grad, precision=11)}")
    return solution.J, solution.grad
