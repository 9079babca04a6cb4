"""
Mass-spring-damper piston: m_s u'' = f_ext + preload - c_s u' - mu_k (u - u_eq).

u grows as the piston moves into the gas (the fluid fills [0, 1 - u]), so the
gauge load is f_ext = -(p_if - p0) A. With the default preload -p0 A the total
load is -p_if A: the piston backs onto vacuum and rests at u_eq = 0. The gauge
f_ext = +(p_if - p0) A with a spring offset u_eq = -0.1 measures displacement
along the opposite axis; preload = 0 with u_eq = +0.1 is its mirror image here.
"""
from typing import Optional

import numpy as np

from benchmarks.fluid import FluidModel1D
from core import SubsystemModel


class StructureModel(SubsystemModel):
    """
    State (u_s', u_s), mass diag(m_s, 1), stiffness mu[0].

    The coupling term is the gauge interface force f_ext = -(p_if - p0) A,
    p_if being the momentum flux through the piston face. Without a fluid
    the coupling is identically zero.
    """

    name = "structure"
    state_dim = 2
    coupling_dim = 1

    def __init__(self, fluid: Optional[FluidModel1D] = None, m_s: float = 1.0, c_s: float = 0.0,
                 u_eq: float = 0.0, preload: float = 0.0, area: float = 1.0, p0: float = 0.4,
                 u_s0: float = 0.0, velocity0: float = 0.0, self_index: int = 0, mesh_index: int = 1,
                 fluid_index: int = 2):
        self.fluid = fluid
        self.m_s = float(m_s)
        self.c_s = float(c_s)
        self.u_eq = float(u_eq)
        self.preload = float(preload)
        self.area = float(area)
        self.p0 = float(p0)
        self.u_s0 = float(u_s0)
        self.velocity0 = float(velocity0)
        self.self_index = self_index
        self.mesh_index = mesh_index
        self.fluid_index = fluid_index

    def mass_matrix(self):
        return np.diag([self.m_s, 1.0])

    def residual(self, u, c, mu, t):
        velocity, displacement = u
        force = c[0] + self.preload - self.c_s * velocity - mu[0] * (displacement - self.u_eq)
        return np.array([force, velocity])

    def d_residual_d_state(self, u, c, mu, t):
        return np.array([[-self.c_s, -mu[0]], [1.0, 0.0]])

    def d_residual_d_coupling(self, u, c, mu, t):
        return np.array([[1.0], [0.0]])

    def d_residual_d_param(self, u, c, mu, t):
        jac = np.zeros((2, len(mu)))
        jac[0, 0] = -(u[1] - self.u_eq)
        return jac

    def _interface_point(self, states):
        """(U_X of the last fluid cell, x_{N-1}, x_N, v_N) seen by the piston face."""
        n = self.fluid.n_cells
        structure = states[self.self_index]
        mesh = states[self.mesh_index]
        fluid = states[self.fluid_index]
        x_left = self.fluid.reference_nodes[n - 1] + mesh[n - 2]
        return fluid[-3:], x_left, 1.0 - structure[1], -structure[0]

    def coupling(self, states, mu, t):
        if self.fluid is None:
            return np.zeros(1)
        p_interface = self.fluid.interface_pressure(*self._interface_point(states))
        return np.array([-(p_interface - self.p0) * self.area])

    def d_coupling_d_state(self, k, states, mu, t):
        jac = np.zeros((1, len(states[k])))
        if self.fluid is None:
            return jac
        grad = self.fluid.interface_pressure_gradient(*self._interface_point(states))
        n = self.fluid.n_cells
        if k == self.fluid_index:
            jac[0, -3:] = -self.area * grad[0:3]
        elif k == self.mesh_index:
            jac[0, n - 2] = -self.area * grad[3]
        elif k == self.self_index:
            # x_wall = 1 - u_s, v_wall = -u_s'
            jac[0, 0] = self.area * grad[5]
            jac[0, 1] = self.area * grad[4]
        return jac

    def initial_state(self, mu):
        return np.array([self.velocity0, self.u_s0])

    def energy(self, u: np.ndarray, stiffness: float) -> float:
        """Mechanical energy 1/2 m_s u'^2 + 1/2 k (u - u_eq)^2."""
        return 0.5 * self.m_s * u[0] ** 2 + 0.5 * stiffness * (u[1] - self.u_eq) ** 2
