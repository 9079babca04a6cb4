"""
Scalar decay benchmark u' = -mu u with closed-form objective J = int_0^T u^2 dt.
"""
import numpy as np

from core import CoupledSystem, SubsystemModel


class ScalarDecayModel(SubsystemModel):
    name = "scalar"
    state_dim = 1
    coupling_dim = 0

    def __init__(self, u0: float = 1.0):
        self.u0 = float(u0)

    def residual(self, u, c, mu, t):
        return -mu[0] * u

    def coupling(self, states, mu, t):
        return np.zeros(0)

    def d_residual_d_state(self, u, c, mu, t):
        return np.array([[-mu[0]]])

    def d_residual_d_coupling(self, u, c, mu, t):
        return np.zeros((1, 0))

    def d_coupling_d_state(self, k, states, mu, t):
        return np.zeros((0, len(states[k])))

    def d_residual_d_param(self, u, c, mu, t):
        grad = np.zeros((1, len(mu)))
        grad[0, 0] = -u[0]
        return grad

    def initial_state(self, mu):
        return np.array([self.u0])


def build_scalar_decay(mu: float = 1.0, u0: float = 1.0) -> CoupledSystem:
    return CoupledSystem([ScalarDecayModel(u0)], [mu], name="scalar-decay")


def scalar_decay_objective(mu: float, T: float = 1.0, u0: float = 1.0) -> float:
    """Closed-form J(mu) = u0^2 (1 - exp(-2 mu T)) / (2 mu)."""
    if mu == 0.0:
        return u0 * u0 * T
    return u0 * u0 * (1.0 - np.exp(-2.0 * mu * T)) / (2.0 * mu)


def scalar_decay_gradient(mu: float, T: float = 1.0, u0: float = 1.0) -> float:
    """Closed-form dJ/dmu."""
    if mu == 0.0:
        return -u0 * u0 * T * T
    decay = np.exp(-2.0 * mu * T)
    return u0 * u0 * (T * decay / mu - (1.0 - decay) / (2.0 * mu * mu))
