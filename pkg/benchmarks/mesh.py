"""
Mesh pseudo-structure: rho_m d_tt = E_m d_XX - c_m d_t on the interior nodes,
central differences on the uniform reference grid. The node at X = 0 is fixed,
the node at X = 1 follows the piston through the coupling c^x = (-u_s, -u_s').
"""
from typing import Optional

import numpy as np

from core import SubsystemModel


class MeshModel1D(SubsystemModel):
    """State (d_1..d_{N-1}, w_1..w_{N-1}): interior nodal displacements and velocities."""

    name = "mesh"
    coupling_dim = 2

    def __init__(self, n_cells: int = 100, rho_m: float = 1.0, E_m: float = 1.0, c_m: float = 0.0,
                 structure_index: int = 0, initial_displacement: Optional[np.ndarray] = None,
                 initial_velocity: Optional[np.ndarray] = None):
        self.n_cells = int(n_cells)
        self.n_nodes = self.n_cells - 1
        self.rho_m = float(rho_m)
        self.E_m = float(E_m)
        self.c_m = float(c_m)
        self.structure_index = structure_index
        self.h = 1.0 / self.n_cells
        self.state_dim = 2 * self.n_nodes
        self.initial_displacement = (np.zeros(self.n_nodes) if initial_displacement is None
                                     else np.asarray(initial_displacement, dtype=float))
        self.initial_velocity = (np.zeros(self.n_nodes) if initial_velocity is None
                                 else np.asarray(initial_velocity, dtype=float))

        laplacian = (np.diag(-2.0 * np.ones(self.n_nodes))
                     + np.diag(np.ones(self.n_nodes - 1), 1)
                     + np.diag(np.ones(self.n_nodes - 1), -1)) / self.h ** 2
        eye = np.eye(self.n_nodes)
        self._jacobian = np.block([
            [np.zeros((self.n_nodes, self.n_nodes)), eye],
            [self.E_m * laplacian, -self.c_m * eye],
        ])

    def mass_matrix(self):
        return np.diag(np.concatenate([np.ones(self.n_nodes), self.rho_m * np.ones(self.n_nodes)]))

    def residual(self, u, c, mu, t):
        d, w = u[:self.n_nodes], u[self.n_nodes:]
        full = np.concatenate([[0.0], d, [c[0]]])
        laplacian = (full[2:] - 2.0 * full[1:-1] + full[:-2]) / self.h ** 2
        return np.concatenate([w, self.E_m * laplacian - self.c_m * w])

    def d_residual_d_state(self, u, c, mu, t):
        return self._jacobian.copy()

    def d_residual_d_coupling(self, u, c, mu, t):
        jac = np.zeros((self.state_dim, self.coupling_dim))
        jac[-1, 0] = self.E_m / self.h ** 2
        return jac

    def coupling(self, states, mu, t):
        structure = states[self.structure_index]
        return np.array([-structure[1], -structure[0]])

    def d_coupling_d_state(self, k, states, mu, t):
        jac = np.zeros((self.coupling_dim, len(states[k])))
        if k == self.structure_index:
            jac[0, 1] = -1.0
            jac[1, 0] = -1.0
        return jac

    def initial_state(self, mu):
        return np.concatenate([self.initial_displacement, self.initial_velocity])
