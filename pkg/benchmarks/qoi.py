"""
Objective integrands shared by the benchmark problems.
"""
from typing import Optional, Sequence

import numpy as np

from core import QoiModel


class SquaredComponentQoi(QoiModel):
    """j = scale * u^i[index]^2 (piston: squared displacement)."""

    def __init__(self, subsystem: int, index: int, scale: float = 1.0):
        self.subsystem = subsystem
        self.index = index
        self.scale = scale

    def integrand(self, states, mu, t):
        return float(self.scale * states[self.subsystem][self.index] ** 2)

    def d_integrand_d_state(self, i, states, mu, t):
        grad = np.zeros(len(states[i]))
        if i == self.subsystem:
            grad[self.index] = 2.0 * self.scale * states[i][self.index]
        return grad


class HalfSquaredNormQoi(QoiModel):
    """j = 1/2 sum_i |u^i|^2."""

    def integrand(self, states, mu, t):
        return float(0.5 * sum(np.dot(u, u) for u in states))

    def d_integrand_d_state(self, i, states, mu, t):
        return np.array(states[i], dtype=float)


class LinearStateQoi(QoiModel):
    """j = sum_i w_i . u^i with fixed weights."""

    def __init__(self, weights: Sequence[np.ndarray]):
        self.weights = [np.asarray(w, dtype=float) for w in weights]

    def integrand(self, states, mu, t):
        return float(sum(w @ u for w, u in zip(self.weights, states)))

    def d_integrand_d_state(self, i, states, mu, t):
        return self.weights[i].copy()


class ConstantQoi(QoiModel):
    """j = value everywhere; J measures the integrated time span."""

    def __init__(self, value: float = 1.0):
        self.value = value

    def integrand(self, states, mu, t):
        return float(self.value)

    def d_integrand_d_state(self, i, states, mu, t):
        return np.zeros(len(states[i]))


class ParameterQuadraticQoi(QoiModel):
    """j = |mu - target|^2, independent of the state."""

    def __init__(self, target: Optional[Sequence[float]] = None):
        self.target = None if target is None else np.asarray(target, dtype=float)

    def _offset(self, mu):
        return mu - (0.0 if self.target is None else self.target)

    def integrand(self, states, mu, t):
        offset = self._offset(mu)
        return float(offset @ offset)

    def d_integrand_d_state(self, i, states, mu, t):
        return np.zeros(len(states[i]))

    def d_integrand_d_param(self, states, mu, t):
        return 2.0 * self._offset(mu)


class ParameterLinearQoi(QoiModel):
    """j = sum(mu)."""

    def integrand(self, states, mu, t):
        return float(np.sum(mu))

    def d_integrand_d_state(self, i, states, mu, t):
        return np.zeros(len(states[i]))

    def d_integrand_d_param(self, states, mu, t):
        return np.ones(len(mu))
