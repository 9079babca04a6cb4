"""
Test script for the two-subsystem linear model problem (temporal order oracle).
"""
import sys
from math import factorial
from pathlib import Path

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent))

from benchmarks.linear import build_linear_model
from benchmarks.qoi import HalfSquaredNormQoi
from benchmarks.registry import build_problem, order_study_reference
from config import RunConfig
from core import integrate, make_time_grid
from reporting import observed_orders
from tableaux import get_scheme, list_schemes
from verification import check_subsystem_jacobians


def test_decoupled_exponential():
    system = build_linear_model([[-2.0, 0.0], [0.0, -0.5]], [1.0, 3.0])
    for t in (0.0, 0.3, 1.7):
        assert np.allclose(system.analytic_solution(t), [np.exp(-2.0 * t), 3.0 * np.exp(-0.5 * t)], rtol=1e-14)


def test_analytic_solution_matches_series():
    """exp(A t) u0 against a 50-term Taylor series."""
    system = build_linear_model([[-1.0, 0.7], [-0.3, -0.4]], [0.5, -1.0])
    A = system.matrix
    for t in (0.5, 1.0, 2.0):
        series = sum(np.linalg.matrix_power(A * t, k) / factorial(k) for k in range(50)) @ system.u0
        assert np.allclose(system.analytic_solution(t), series, rtol=0.0, atol=1e-12)


def test_rotation_preserves_norm():
    system = build_linear_model([[0.0, 1.0], [-1.0, 0.0]], [1.0, 0.0])
    for t in np.linspace(0.0, 6.0, 7):
        assert abs(np.linalg.norm(system.analytic_solution(t)) - 1.0) < 1e-13
    assert np.allclose(system.analytic_solution(np.pi / 2), [0.0, -1.0], atol=1e-14)


def test_shape_validation():
    try:
        build_linear_model([[1.0, 2.0, 3.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("coefficient matrix must be 2x2")


def test_jacobians():
    system = build_linear_model()
    states = [np.array([0.3]), np.array([-1.2])]
    for index in range(2):
        assert all(check.passed for check in check_subsystem_jacobians(system, index, states))


def test_orders_against_exact_solution():
    print("\n📈 Linear model order study")
    base = build_problem(RunConfig(problem="linear-model"))
    exact = order_study_reference(base)(base.T - base.t0)
    for name in list_schemes():
        tab = get_scheme(name)
        dts, errors = [], []
        for level in range(4):
            prob = base.with_scheme(name).with_dt(base.dt / 2 ** level)
            state, _, _ = integrate(prob.system, prob.tab, prob.qoi, prob.t_grid)
            dts.append(prob.dt)
            errors.append(float(np.max(np.abs(np.concatenate(state) - exact))))
        _, slope = observed_orders(dts, errors)
        print(f"   {name}: {slope:.3f} (design {tab.design_order})")
        assert abs(slope - tab.design_order) <= 0.4


def test_shifted_time_window():
    """Autonomous system: a window [t0, t0 + T] gives the same final state as [0, T]."""
    system = build_linear_model()
    tab = get_scheme("imex3")
    a, _, _ = integrate(system, tab, HalfSquaredNormQoi(), make_time_grid(0.0, 1.0, 0.1))
    b, _, _ = integrate(system, tab, HalfSquaredNormQoi(), make_time_grid(2.0, 3.0, 0.1))
    assert np.allclose(np.concatenate(a), np.concatenate(b), rtol=1e-12)


if __name__ == "__main__":
    test_decoupled_exponential()
    test_analytic_solution_matches_series()
    test_rotation_preserves_norm()
    test_shape_validation()
    test_jacobians()
    test_orders_against_exact_solution()
    test_shifted_time_window()
    print("\n✅ Linear model tests passed")
