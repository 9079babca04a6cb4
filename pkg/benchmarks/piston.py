"""
Three-field 1D piston benchmark: structure, mesh and fluid coupled in that order.

    c^s(u^s, u^x, u^f)   gauge force of the fluid on the piston
    c^x(u^s)             piston displacement/velocity as mesh Dirichlet data
    c^f(u^s, u^x)        nodal positions and velocities of the fluid mesh

The fluid occupies Omega(t) = [0, 1 - u_s].
"""
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from loguru import logger

from benchmarks.fluid import FluidModel1D
from benchmarks.mesh import MeshModel1D
from benchmarks.qoi import SquaredComponentQoi
from benchmarks.structure import StructureModel
from config import PistonConfig
from core import CoupledSystem

STRUCTURE, MESH, FLUID = range(3)

PISTON_BOUNDS = ([0.0], [10.0])


class PistonSystem(CoupledSystem):
    """Coupled piston system with mu = (mu_k,)."""

    def __init__(self, config: PistonConfig, mu_k: float):
        self.config = config
        self.fluid = FluidModel1D(n_cells=config.n_cells, gamma=config.gamma, rho0=config.rho0, p0=config.p0,
                                  structure_index=STRUCTURE, mesh_index=MESH)
        self.mesh = MeshModel1D(n_cells=config.n_cells, rho_m=config.rho_m, E_m=config.E_m, c_m=config.c_m,
                                structure_index=STRUCTURE)
        self.structure = StructureModel(fluid=self.fluid, m_s=config.m_s, c_s=config.c_s, u_eq=config.u_eq,
                                        preload=config.preload_force, area=config.area, p0=config.p0,
                                        self_index=STRUCTURE, mesh_index=MESH, fluid_index=FLUID)
        super().__init__([self.structure, self.mesh, self.fluid], [mu_k], name="piston")

    def interface_pressure(self, states: Sequence[np.ndarray]) -> float:
        n = self.fluid.n_cells
        x_left = self.fluid.reference_nodes[n - 1] + states[MESH][n - 2]
        return self.fluid.interface_pressure(states[FLUID][-3:], x_left,
                                             1.0 - states[STRUCTURE][1], -states[STRUCTURE][0])

    def fluid_mass(self, states: Sequence[np.ndarray]) -> float:
        return self.fluid.total_mass(states[FLUID])

    def time_series_columns(self) -> Dict[str, Callable[[Sequence[np.ndarray]], float]]:
        """Per-step CSV columns besides t and J_running."""
        return {
            "u_s": lambda states: float(states[STRUCTURE][1]),
            "udot_s": lambda states: float(states[STRUCTURE][0]),
            "p_interface": self.interface_pressure,
        }


def build_piston(mu_k: Optional[float] = None, config: Optional[PistonConfig] = None) -> PistonSystem:
    """
    Build the piston system at rest: rho = rho0, u = 0, p = p0 in every cell,
    zero mesh displacement, piston at u_s = 0 with zero velocity.

    Args:
        mu_k: spring stiffness (defaults to config.mu_k)
        config: physical constants (defaults to PistonConfig())

    Returns:
        PistonSystem: coupled (structure, mesh, fluid) system
    """
    config = config or PistonConfig()
    mu_k = config.mu_k if mu_k is None else float(mu_k)
    if not np.isfinite(mu_k):
        raise ValueError(f"spring stiffness must be finite, got {mu_k}")
    logger.debug(f"Building piston: {config.n_cells} cells, mu_k={mu_k}, preload={config.preload_force}")
    return PistonSystem(config, mu_k)


def piston_qoi() -> SquaredComponentQoi:
    """j = u_s^2."""
    return SquaredComponentQoi(subsystem=STRUCTURE, index=1)
