"""
1D inviscid Euler flow on a moving mesh (ALE), first-order finite volumes with Roe's flux.

The state holds the transformed conservative variables U_X = g U of each
reference cell, g = (x_{k+1} - x_k) / h being the cell Jacobian of the
mapping. Nodal positions and velocities of the mesh arrive through the
coupling term c = (x_0..x_N, v_0..v_N). Both walls are reflective: the
ghost state is the mirror image of the interior state about the wall
velocity, so the relative normal velocity and the mass flux vanish there.

Jacobians are exact: jax.jacfwd differentiates the very same flux code the
residual evaluates with numpy.
"""
from typing import Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np

from core import SubsystemModel
from errors import NonPhysicalStateError

jax.config.update("jax_enable_x64", True)


def ale_roe_flux(UL, UR, v, gamma: float, xp=np):
    """
    Roe flux through a face moving with velocity v:
    1/2 (F(U_L) + F(U_R)) - 1/2 v (U_L + U_R) - 1/2 sum_k |lambda_k - v| alpha_k r_k.

    xp is numpy for evaluation or jax.numpy under differentiation; returns
    (mass, momentum, energy) fluxes.
    """
    rho_l, m_l, e_l = UL
    rho_r, m_r, e_r = UR
    gm1 = gamma - 1.0

    u_l = m_l / rho_l
    u_r = m_r / rho_r
    p_l = gm1 * (e_l - 0.5 * m_l * u_l)
    p_r = gm1 * (e_r - 0.5 * m_r * u_r)
    h_l = (e_l + p_l) / rho_l
    h_r = (e_r + p_r) / rho_r

    s_l = xp.sqrt(rho_l)
    s_r = xp.sqrt(rho_r)
    weight = s_l + s_r
    u_t = (s_l * u_l + s_r * u_r) / weight
    h_t = (s_l * h_l + s_r * h_r) / weight
    c2_t = gm1 * (h_t - 0.5 * u_t * u_t)
    c_t = xp.sqrt(c2_t)
    rho_t = s_l * s_r

    d_rho = rho_r - rho_l
    d_p = p_r - p_l
    d_u = u_r - u_l
    alpha_1 = (d_p - rho_t * c_t * d_u) / (2.0 * c2_t)
    alpha_2 = d_rho - d_p / c2_t
    alpha_3 = (d_p + rho_t * c_t * d_u) / (2.0 * c2_t)

    w_1 = xp.abs(u_t - c_t - v) * alpha_1
    w_2 = xp.abs(u_t - v) * alpha_2
    w_3 = xp.abs(u_t + c_t - v) * alpha_3

    diss_rho = w_1 + w_2 + w_3
    diss_m = w_1 * (u_t - c_t) + w_2 * u_t + w_3 * (u_t + c_t)
    diss_e = w_1 * (h_t - u_t * c_t) + w_2 * (0.5 * u_t * u_t) + w_3 * (h_t + u_t * c_t)

    f_rho = 0.5 * (m_l + m_r) - 0.5 * v * (rho_l + rho_r) - 0.5 * diss_rho
    f_m = 0.5 * (m_l * u_l + p_l + m_r * u_r + p_r) - 0.5 * v * (m_l + m_r) - 0.5 * diss_m
    f_e = 0.5 * (u_l * (e_l + p_l) + u_r * (e_r + p_r)) - 0.5 * v * (e_l + e_r) - 0.5 * diss_e
    return f_rho, f_m, f_e


def mirror_state(U, v):
    """Reflection of U about a wall moving with velocity v (density and pressure kept)."""
    rho, m, e = U
    return rho, 2.0 * rho * v - m, e + 2.0 * rho * v * v - 2.0 * v * m


def pressure(U, gamma: float) -> np.ndarray:
    rho, m, e = (np.asarray(q, dtype=float) for q in U)
    return (gamma - 1.0) * (e - 0.5 * m * m / rho)


def roe_flux_1d(U_L: Sequence[float], U_R: Sequence[float], gamma: float = 1.4) -> np.ndarray:
    """
    Roe numerical flux of the 1D Euler equations on a fixed face.

    Args:
        U_L: left conservative state (rho, rho u, E)
        U_R: right conservative state
        gamma: ratio of specific heats

    Returns:
        np.ndarray: interface flux (mass, momentum, energy)

    Raises:
        NonPhysicalStateError: nonpositive density or pressure
    """
    left = [np.atleast_1d(np.asarray(q, dtype=float)) for q in U_L]
    right = [np.atleast_1d(np.asarray(q, dtype=float)) for q in U_R]
    for side, state in (("left", left), ("right", right)):
        if np.any(state[0] <= 0.0) or np.any(pressure(state, gamma) <= 0.0):
            raise NonPhysicalStateError(f"{side} state has nonpositive density or pressure")
    flux = np.array(ale_roe_flux(left, right, 0.0, gamma))
    return flux[:, 0] if flux.shape[1] == 1 else flux.T


def _wall_flux(U, x_in, x_out, v, gamma: float, h: float, side: str, xp=np):
    """Flux through a wall face from the adjacent cell's transformed state and nodes."""
    g = (x_out - x_in) / h if side == "right" else (x_in - x_out) / h
    inner = tuple(q / g for q in U)
    ghost = mirror_state(inner, v)
    if side == "right":
        return ale_roe_flux(inner, ghost, v, gamma, xp)
    return ale_roe_flux(ghost, inner, v, gamma, xp)


def _interior_face_flux(z, gamma: float, h: float):
    """Flux of one interior face from z = (U_X left, U_X right, x_{f-1}, x_f, x_{f+1}, v_f)."""
    g_l = (z[7] - z[6]) / h
    g_r = (z[8] - z[7]) / h
    left = tuple(z[k] / g_l for k in range(3))
    right = tuple(z[3 + k] / g_r for k in range(3))
    return jnp.stack(ale_roe_flux(left, right, z[9], gamma, jnp))


def _wall_face_flux(z, gamma: float, h: float, side: str):
    """Wall flux from z = (U_X of the adjacent cell, x_in, x_wall, v_wall)."""
    return jnp.stack(_wall_flux(tuple(z[k] for k in range(3)), z[3], z[4], z[5], gamma, h, side, jnp))


# (n_faces, 10) -> (n_faces, 3, 10)
_interior_flux_jacobians = jax.jit(jax.vmap(jax.jacfwd(_interior_face_flux), in_axes=(0, None, None)),
                                   static_argnums=(1, 2))
# (6,) -> (3, 6)
_wall_flux_jacobian = jax.jit(jax.jacfwd(_wall_face_flux), static_argnums=(1, 2, 3))


class FluidModel1D(SubsystemModel):
    """
    Transformed Euler equations on the reference domain [0, 1]:
    d(U_X)_k/dt = -(F_{k+1} - F_k) / h with ALE Roe fluxes F at the nodes.
    """

    name = "fluid"

    def __init__(self, n_cells: int = 100, gamma: float = 1.4, rho0: float = 1.0, p0: float = 0.4,
                 velocity0: float = 0.0, structure_index: int = 0, mesh_index: int = 1,
                 initial_displacement: Optional[np.ndarray] = None):
        self.n_cells = int(n_cells)
        self.gamma = float(gamma)
        self.rho0 = float(rho0)
        self.p0 = float(p0)
        self.velocity0 = float(velocity0)
        self.structure_index = structure_index
        self.mesh_index = mesh_index
        self.h = 1.0 / self.n_cells
        self.state_dim = 3 * self.n_cells
        self.coupling_dim = 2 * (self.n_cells + 1)
        self.reference_nodes = np.linspace(0.0, 1.0, self.n_cells + 1)
        self.initial_displacement = (np.zeros(self.n_cells - 1) if initial_displacement is None
                                     else np.asarray(initial_displacement, dtype=float))

    # --- layout helpers -----------------------------------------------------

    def split_coupling(self, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n = self.n_cells
        return c[:n + 1], c[n + 1:]

    def cell_jacobians(self, x: np.ndarray) -> np.ndarray:
        return np.diff(x) / self.h

    def primitive_cells(self, u: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Physical conservative states U = U_X / g per cell, shape (n_cells, 3)."""
        x, _ = self.split_coupling(c)
        return u.reshape(self.n_cells, 3) / self.cell_jacobians(x)[:, None]

    def rest_state(self) -> np.ndarray:
        energy = self.p0 / (self.gamma - 1.0) + 0.5 * self.rho0 * self.velocity0 ** 2
        return np.array([self.rho0, self.rho0 * self.velocity0, energy])

    def total_mass(self, u: np.ndarray) -> float:
        """Sum of transformed cell masses times the reference spacing."""
        return float(np.sum(u.reshape(self.n_cells, 3)[:, 0]) * self.h)

    # --- fluxes ---------------------------------------------------------------

    def face_fluxes(self, u: np.ndarray, c: np.ndarray) -> np.ndarray:
        """ALE Roe fluxes at all n_cells + 1 nodes, shape (n_cells + 1, 3)."""
        n = self.n_cells
        x, v = self.split_coupling(c)
        cells = self.primitive_cells(u, c)
        fluxes = np.empty((n + 1, 3))
        interior = ale_roe_flux(tuple(cells[:-1].T), tuple(cells[1:].T), v[1:-1], self.gamma)
        fluxes[1:-1] = np.column_stack(interior)
        UX = u.reshape(n, 3)
        left = _wall_flux(tuple(UX[0:1].T), x[1:2], x[0:1], v[0:1], self.gamma, self.h, "left")
        right = _wall_flux(tuple(UX[-1:].T), x[-2:-1], x[-1:], v[-1:], self.gamma, self.h, "right")
        fluxes[0] = np.concatenate(left)
        fluxes[-1] = np.concatenate(right)
        return fluxes

    def wall_flux(self, ux: np.ndarray, x_in: float, x_wall: float, v_wall: float,
                  side: str = "right") -> np.ndarray:
        """Flux (3,) through a wall face from the adjacent cell's U_X and the face nodes."""
        flux = _wall_flux(tuple(np.atleast_1d(np.asarray(q, dtype=float)) for q in ux[:3]),
                          np.atleast_1d(float(x_in)), np.atleast_1d(float(x_wall)), np.atleast_1d(float(v_wall)),
                          self.gamma, self.h, side)
        return np.concatenate(flux)

    def wall_flux_with_derivatives(self, ux: np.ndarray, x_in: float, x_wall: float, v_wall: float,
                                   side: str = "right") -> Tuple[np.ndarray, np.ndarray]:
        """
        Wall flux and its derivatives with respect to (U_X of the cell, x_in, x_wall, v_wall).

        Returns:
            Tuple: flux (3,), derivative matrix (3, 6)
        """
        z = np.array([ux[0], ux[1], ux[2], x_in, x_wall, v_wall], dtype=float)
        der = np.asarray(_wall_flux_jacobian(jnp.asarray(z), self.gamma, self.h, side))
        return self.wall_flux(ux, x_in, x_wall, v_wall, side), der

    def interface_pressure(self, ux_last: np.ndarray, x_left: float, x_wall: float, v_wall: float) -> float:
        """Momentum flux through the piston face."""
        return float(self.wall_flux(ux_last, x_left, x_wall, v_wall, "right")[1])

    def interface_pressure_gradient(self, ux_last: np.ndarray, x_left: float, x_wall: float,
                                    v_wall: float) -> np.ndarray:
        """Derivatives of the piston-face momentum flux w.r.t. (U_X last cell, x_{N-1}, x_N, v_N)."""
        _, der = self.wall_flux_with_derivatives(ux_last, x_left, x_wall, v_wall, "right")
        return der[1]

    def _flux_jacobians(self, u: np.ndarray, c: np.ndarray):
        n = self.n_cells
        x, v = self.split_coupling(c)
        UX = u.reshape(n, 3)

        if n > 1:
            faces = np.column_stack([UX[:-1], UX[1:], x[:-2], x[1:-1], x[2:], v[1:-1]])
            d_interior = np.asarray(_interior_flux_jacobians(jnp.asarray(faces), self.gamma, self.h))
        else:
            d_interior = np.zeros((0, 3, 10))

        _, d_left = self.wall_flux_with_derivatives(UX[0], x[1], x[0], v[0], "left")
        _, d_right = self.wall_flux_with_derivatives(UX[-1], x[-2], x[-1], v[-1], "right")
        return d_interior, d_left, d_right

    # --- SubsystemModel -------------------------------------------------------

    def residual(self, u, c, mu, t):
        fluxes = self.face_fluxes(u, c)
        return (-(fluxes[1:] - fluxes[:-1]) / self.h).ravel()

    def d_residual_d_state(self, u, c, mu, t):
        n = self.n_cells
        d_interior, d_left, d_right = self._flux_jacobians(u, c)
        jac = np.zeros((3 * n, 3 * n))
        faces = np.arange(1, n)
        # r_k = (F_k - F_{k+1}) / h
        _add_blocks(jac, faces, faces - 1, d_interior[:, :, 0:3], +1.0 / self.h)
        _add_blocks(jac, faces, faces, d_interior[:, :, 3:6], +1.0 / self.h)
        _add_blocks(jac, faces - 1, faces - 1, d_interior[:, :, 0:3], -1.0 / self.h)
        _add_blocks(jac, faces - 1, faces, d_interior[:, :, 3:6], -1.0 / self.h)
        jac[0:3, 0:3] += d_left[:, 0:3] / self.h
        jac[-3:, -3:] -= d_right[:, 0:3] / self.h
        return jac

    def d_residual_d_coupling(self, u, c, mu, t):
        n = self.n_cells
        d_interior, d_left, d_right = self._flux_jacobians(u, c)
        jac = np.zeros((3 * n, 2 * (n + 1)))
        faces = np.arange(1, n)
        rows_plus = (3 * faces[:, None] + np.arange(3)[None, :])        # cell f
        rows_minus = (3 * (faces - 1)[:, None] + np.arange(3)[None, :])  # cell f-1
        for slot, column in ((6, faces - 1), (7, faces), (8, faces + 1), (9, n + 1 + faces)):
            block = d_interior[:, :, slot] / self.h
            np.add.at(jac, (rows_plus, np.broadcast_to(column[:, None], rows_plus.shape)), block)
            np.add.at(jac, (rows_minus, np.broadcast_to(column[:, None], rows_minus.shape)), -block)

        # left wall slots: x_in = x_1, x_wall = x_0, v_0 ; right wall: x_{n-1}, x_n, v_n
        for slot, column in ((3, 1), (4, 0), (5, n + 1)):
            jac[0:3, column] += d_left[:, slot] / self.h
        for slot, column in ((3, n - 1), (4, n), (5, 2 * n + 1)):
            jac[-3:, column] -= d_right[:, slot] / self.h
        return jac

    def coupling(self, states, mu, t):
        n = self.n_cells
        structure = states[self.structure_index]
        mesh = states[self.mesh_index]
        x = self.reference_nodes.copy()
        v = np.zeros(n + 1)
        x[1:-1] += mesh[:n - 1]
        v[1:-1] = mesh[n - 1:]
        x[-1] = 1.0 - structure[1]
        v[-1] = -structure[0]
        return np.concatenate([x, v])

    def d_coupling_d_state(self, k, states, mu, t):
        n = self.n_cells
        jac = np.zeros((self.coupling_dim, len(states[k])))
        if k == self.structure_index:
            jac[n, 1] = -1.0
            jac[2 * n + 1, 0] = -1.0
        elif k == self.mesh_index:
            interior = np.arange(n - 1)
            jac[1 + interior, interior] = 1.0
            jac[n + 2 + interior, n - 1 + interior] = 1.0
        return jac

    def initial_state(self, mu):
        x = self.reference_nodes.copy()
        x[1:-1] += self.initial_displacement
        g = self.cell_jacobians(x)
        return (g[:, None] * self.rest_state()[None, :]).ravel()


def _add_blocks(jac: np.ndarray, row_cells: np.ndarray, col_cells: np.ndarray,
                blocks: np.ndarray, scale: float) -> None:
    """Scatter-add 3x3 blocks at (row cell, column cell) positions."""
    offsets = np.arange(3)
    rows = 3 * row_cells[:, None, None] + offsets[None, :, None]
    cols = 3 * col_cells[:, None, None] + offsets[None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    np.add.at(jac, (rows, cols), scale * blocks)
