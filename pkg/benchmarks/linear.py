"""
Two-subsystem linear model problem used as the temporal order oracle.

    du1/dt = a11 u1 + a12 c1,  c1 = u2
    du2/dt = a22 u2 + a21 c2,  c2 = u1

with mu = (a11, a12, a21, a22) and the exact solution exp(A t) u0.
"""
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from core import CoupledSystem, SubsystemModel

# mu layout
A11, A12, A21, A22 = range(4)


class LinearScalarSubsystem(SubsystemModel):
    """u' = mu[diag] u + mu[off] c with c = u^partner."""

    state_dim = 1
    coupling_dim = 1

    def __init__(self, name: str, diag: int, off: int, partner: int, u0: float):
        self.name = name
        self.diag = diag
        self.off = off
        self.partner = partner
        self.u0 = float(u0)

    def residual(self, u, c, mu, t):
        return mu[self.diag] * u + mu[self.off] * c

    def coupling(self, states, mu, t):
        return np.array(states[self.partner], dtype=float)

    def d_residual_d_state(self, u, c, mu, t):
        return np.array([[mu[self.diag]]])

    def d_residual_d_coupling(self, u, c, mu, t):
        return np.array([[mu[self.off]]])

    def d_coupling_d_state(self, k, states, mu, t):
        return np.eye(1) if k == self.partner else np.zeros((1, len(states[k])))

    def d_residual_d_param(self, u, c, mu, t):
        grad = np.zeros((1, len(mu)))
        grad[0, self.diag] = u[0]
        grad[0, self.off] = c[0]
        return grad

    def initial_state(self, mu):
        return np.array([self.u0])


class LinearCoupledModel(CoupledSystem):
    """Coupled linear model with its matrix-exponential solution."""

    def __init__(self, coefficients: Sequence[Sequence[float]], u0: Sequence[float]):
        a = np.asarray(coefficients, dtype=float)
        if a.shape != (2, 2):
            raise ValueError(f"coefficient matrix must be 2x2, got shape {a.shape}")
        u0 = np.asarray(u0, dtype=float)
        subsystems = [
            LinearScalarSubsystem("u1", diag=A11, off=A12, partner=1, u0=u0[0]),
            LinearScalarSubsystem("u2", diag=A22, off=A21, partner=0, u0=u0[1]),
        ]
        super().__init__(subsystems, [a[0, 0], a[0, 1], a[1, 0], a[1, 1]], name="linear-model")
        self.u0 = u0

    @property
    def matrix(self) -> np.ndarray:
        mu = self.mu
        return np.array([[mu[A11], mu[A12]], [mu[A21], mu[A22]]])

    def analytic_solution(self, t: float) -> np.ndarray:
        return expm(self.matrix * t) @ self.u0


def build_linear_model(coefficients: Sequence[Sequence[float]] = ((-1.0, 0.5), (0.5, -1.0)),
                       u0: Sequence[float] = (1.0, 0.0)) -> LinearCoupledModel:
    return LinearCoupledModel(coefficients, u0)
