"""
Test script for the partitioned IMEX-RK forward integrator.
Covers the stage sweeps, predictor, time grid, error annotation and temporal order.
"""
import sys
from pathlib import Path

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent))

from benchmarks.linear import build_linear_model
from benchmarks.piston import build_piston, piston_qoi
from benchmarks.qoi import ConstantQoi, HalfSquaredNormQoi
from benchmarks.scalar import build_scalar_decay
from benchmarks.structure import StructureModel
from config import PistonConfig
from core import (
    CoupledSystem, NewtonOptions, SubsystemModel, integrate, make_time_grid, predictor_eval, step,
)
from errors import NewtonConvergenceError, NonFiniteStateError
from reporting import observed_orders
from tableaux import get_scheme, list_schemes


class _NanModel(SubsystemModel):
    name = "nan"
    state_dim = 1
    coupling_dim = 0

    def residual(self, u, c, mu, t):
        return np.array([np.nan])

    def coupling(self, states, mu, t):
        return np.zeros(0)

    def d_residual_d_state(self, u, c, mu, t):
        return np.zeros((1, 1))

    def d_residual_d_coupling(self, u, c, mu, t):
        return np.zeros((1, 0))

    def d_coupling_d_state(self, k, states, mu, t):
        return np.zeros((0, len(states[k])))

    def initial_state(self, mu):
        return np.ones(1)


def _small_piston():
    return build_piston(1.0, PistonConfig(n_cells=10))


def test_splitting_identity_on_piston():
    """M (k_I + k_E) = dt r(U, c(U)) at every recorded stage."""
    system = _small_piston()
    tab = get_scheme("imex2")
    _, _, store = integrate(system, tab, piston_qoi(), make_time_grid(0.0, 0.05, 0.01))
    mu = system.mu
    for record in store:
        for j in range(tab.s):
            stage = record.stage_states[j]
            t = record.stage_times[j]
            for i, model in enumerate(system.subsystems):
                k_sum = record.k_implicit[j][i] + record.k_explicit[j][i]
                full = record.dt * model.residual(stage[i], model.coupling(stage, mu, t), mu, t)
                assert np.allclose(model.mass_apply(k_sum), full, rtol=1e-10, atol=1e-10)


def test_stage_and_step_reconstruction():
    system = _small_piston()
    tab = get_scheme("imex3")
    _, _, store = integrate(system, tab, piston_qoi(), make_time_grid(0.0, 0.03, 0.01))
    for record in store:
        for i in range(system.m):
            for j in range(tab.s):
                seed = record.u_start[i].copy()
                for p in range(j):
                    seed += tab.a_hat[j, p] * record.k_explicit[p][i] + tab.a[j, p] * record.k_implicit[p][i]
                seed += tab.a[j, j] * record.k_implicit[j][i]
                assert np.allclose(record.stage_states[j][i], seed, rtol=0.0, atol=1e-13)
            end = record.u_start[i] + sum(tab.b_hat[p] * record.k_explicit[p][i] + tab.b[p] * record.k_implicit[p][i]
                                          for p in range(tab.s))
            assert np.allclose(record.u_end[i], end, rtol=0.0, atol=1e-13)


def test_weak_gauss_seidel_predictor():
    system = build_linear_model()
    prev = [np.array([1.0]), np.array([2.0])]
    stage = [np.array([3.0])]
    # first subsystem sees the step-start state of the second
    assert predictor_eval(system, 0, [], prev, system.mu, 0.0)[0] == 2.0
    # second subsystem sees the current-stage state of the first
    assert predictor_eval(system, 1, stage, prev, system.mu, 0.0)[0] == 3.0
    try:
        predictor_eval(system, 1, [], prev, system.mu, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("missing current-stage state must be rejected")


def test_imex1_is_gauss_seidel_backward_euler():
    """Forward/backward Euler pair reduces to a block Gauss-Seidel backward Euler step."""
    system = build_linear_model()
    a11, a12, a21, a22 = system.mu
    dt = 0.1
    u_next, _, _ = step(system, get_scheme("imex1"), HalfSquaredNormQoi(), system.initial_state(), 0.0, dt)
    u1 = (1.0 + dt * a12 * 0.0) / (1.0 - dt * a11)
    u2 = (0.0 + dt * a21 * u1) / (1.0 - dt * a22)
    assert abs(u_next[0][0] - u1) < 1e-14
    assert abs(u_next[1][0] - u2) < 1e-14


def test_single_subsystem_has_no_explicit_correction():
    system = build_scalar_decay(2.0)
    _, _, store = integrate(system, get_scheme("imex4"), ConstantQoi(), make_time_grid(0.0, 0.1, 0.05))
    for record in store:
        for stage in record.k_explicit:
            assert np.all(stage[0] == 0.0)


def test_constant_qoi_integrates_time_span():
    """sum b = 1, so J of j = 1 is the time span for every scheme."""
    for name in list_schemes():
        _, J, _ = integrate(build_linear_model(), get_scheme(name), ConstantQoi(), make_time_grid(0.5, 2.0, 0.1))
        assert abs(J - 1.5) < 1e-13


def test_temporal_order_on_growth_equation():
    """u' = u, u(0) = 1: error at T = 1 against e."""
    dts = [0.1, 0.05, 0.025, 0.0125]
    print("\n📈 Observed orders on u' = u")
    for name in list_schemes():
        tab = get_scheme(name)
        errors = []
        for dt in dts:
            state, _, _ = integrate(build_scalar_decay(-1.0), tab, ConstantQoi(), make_time_grid(0.0, 1.0, dt))
            errors.append(abs(state[0][0] - np.e))
        _, slope = observed_orders(dts, errors)
        print(f"   {name}: {slope:.3f}")
        assert abs(slope - tab.design_order) <= 0.4


def test_time_grid():
    grid = make_time_grid(0.0, 1.0, 0.3)
    assert len(grid) == 5 and grid[-1] == 1.0
    assert len(make_time_grid(0.0, 1.0, 0.1)) == 11
    assert len(make_time_grid(1.0, 1.0, 0.1)) == 1
    for bad in ((0.0, 1.0, 0.0), (0.0, 1.0, -0.1), (1.0, 0.0, 0.1)):
        try:
            make_time_grid(*bad)
        except ValueError:
            pass
        else:
            raise AssertionError(f"grid {bad} should be rejected")


def test_empty_time_window():
    system = build_linear_model()
    state, J, store = integrate(system, get_scheme("imex2"), HalfSquaredNormQoi(), [0.0])
    assert J == 0.0
    assert len(store) == 0
    assert np.array_equal(np.concatenate(state), [1.0, 0.0])


def test_grid_must_increase():
    try:
        integrate(build_linear_model(), get_scheme("imex2"), HalfSquaredNormQoi(), [0.0, 0.2, 0.1])
    except ValueError:
        pass
    else:
        raise AssertionError("decreasing grid should be rejected")


def test_newton_failure_carries_step():
    try:
        integrate(build_linear_model(), get_scheme("imex2"), HalfSquaredNormQoi(), make_time_grid(0.0, 0.3, 0.1),
                  newton=NewtonOptions(tol=1e-12, max_iter=0))
    except NewtonConvergenceError as exc:
        assert exc.step == 1
        assert exc.stage == 1 and exc.subsystem == 0
        assert str(exc).startswith("step 1:")
    else:
        raise AssertionError("Newton with no iterations cannot converge")


def test_non_finite_state_detected():
    system = CoupledSystem([_NanModel()], [0.0], name="nan")
    try:
        integrate(system, get_scheme("imex1"), ConstantQoi(), make_time_grid(0.0, 0.2, 0.1))
    except NonFiniteStateError as exc:
        assert exc.step == 1
    else:
        raise AssertionError("NaN residual must be detected")


def test_with_mu_does_not_mutate():
    system = build_linear_model()
    other = system.with_mu([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(system.mu, [-1.0, 0.5, 0.5, -1.0])
    assert np.array_equal(other.matrix, [[1.0, 2.0], [3.0, 4.0]])
    try:
        system.with_mu([1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("parameter length must match")


def test_mass_solve_inverts_mass_apply():
    model = StructureModel(m_s=2.5)
    v = np.array([1.0, -3.0])
    assert np.allclose(model.mass_solve(model.mass_apply(v)), v)
    assert np.allclose(model.mass_apply(v), [2.5, -3.0])
    assert np.allclose(model.mass_solve(v, transpose=True), [0.4, -3.0])


if __name__ == "__main__":
    test_splitting_identity_on_piston()
    test_stage_and_step_reconstruction()
    test_weak_gauss_seidel_predictor()
    test_imex1_is_gauss_seidel_backward_euler()
    test_single_subsystem_has_no_explicit_correction()
    test_constant_qoi_integrates_time_span()
    test_temporal_order_on_growth_equation()
    test_time_grid()
    test_empty_time_window()
    test_grid_must_increase()
    test_newton_failure_carries_step()
    test_non_finite_state_detected()
    test_with_mu_does_not_mutate()
    test_mass_solve_inverts_mass_apply()
    print("\n✅ Core tests passed")
