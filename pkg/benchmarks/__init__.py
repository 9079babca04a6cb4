"""
Benchmark problems for the partitioned IMEX-RK integrator.
"""

from .fluid import FluidModel1D, roe_flux_1d
from .linear import LinearCoupledModel, build_linear_model
from .mesh import MeshModel1D
from .piston import PistonSystem, build_piston, piston_qoi
from .qoi import (
    ConstantQoi, HalfSquaredNormQoi, LinearStateQoi, ParameterLinearQoi, ParameterQuadraticQoi,
    SquaredComponentQoi,
)
from .registry import Problem, build_problem, order_study_reference
from .scalar import build_scalar_decay, scalar_decay_gradient, scalar_decay_objective
from .structure import StructureModel

__all__ = [
    'roe_flux_1d',
    'FluidModel1D',
    'MeshModel1D',
    'StructureModel',
    'PistonSystem',
    'build_piston',
    'piston_qoi',
    'LinearCoupledModel',
    'build_linear_model',
    'build_scalar_decay',
    'scalar_decay_objective',
    'scalar_decay_gradient',
    'SquaredComponentQoi',
    'HalfSquaredNormQoi',
    'LinearStateQoi',
    'ConstantQoi',
    'ParameterQuadraticQoi',
    'ParameterLinearQoi',
    'Problem',
    'build_problem',
    'order_study_reference',
]
