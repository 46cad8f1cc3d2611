import numpy as np
import pytest

from ldpspde._stepping import uniform_grid
from ldpspde.errors import BlowUpError, DimensionError, DomainError, ParameterError
from ldpspde.models import DiffusionSpec, allen_cahn_model, burgers_model, default_jump, heat_model, linear_model
from ldpspde.noise import JumpMeasureSpec
from ldpspde.skeleton import (ControlPair, Trajectory, continuity_experiment, energy_audit, random_controls,
                              solve_skeleton)
from ldpspde.spaces import Basis, GalerkinState


def test_null_control_heat_decay():
    m = heat_model(1.0, Basis(n_modes=4))
    times = uniform_grid(0.1, 1024)
    traj = solve_skeleton(m, ControlPair.null(times, 4), GalerkinState.unit(m.basis))
    assert traj.terminal.coeffs[0] == pytest.approx(np.exp(-np.pi**2 * 0.1), rel=1e-12)
    assert np.all(traj.terminal.coeffs[1:] == 0)


def test_zero_state_is_fixed_under_null_control():
    b = Basis(n_modes=6)
    m = burgers_model(0.1, b, jump=default_jump(b, "saturated"))
    times = uniform_grid(0.5, 64)
    traj = solve_skeleton(m, ControlPair.null(times, 6, m.jump.measure), GalerkinState.zeros(b))
    assert np.all(traj.states == 0)


def test_constant_control_ou_closed_form():
    m = linear_model(2.0, Basis(n_modes=1), DiffusionSpec("additive", [0.5]))
    times = uniform_grid(1.0, 50)
    traj = solve_skeleton(m, ControlPair.constant(times, [3.0]), GalerkinState.zeros(m.basis))
    exact = 0.5 * 3.0 * (1 - np.exp(-2.0 * times)) / 2.0
    np.testing.assert_allclose(traj.states[:, 0], exact, rtol=1e-12, atol=1e-15)


def test_misaligned_grid_and_dimension_errors():
    m = heat_model(1.0, Basis(n_modes=2))
    q = ControlPair.null(uniform_grid(1.0, 10), 2)
    with pytest.raises(ParameterError):
        solve_skeleton(m, q, GalerkinState.zeros(m.basis), uniform_grid(1.0, 20))
    with pytest.raises(DimensionError):
        solve_skeleton(m, ControlPair.null(uniform_grid(1.0, 10), 3), GalerkinState.zeros(m.basis))
    with pytest.raises(DimensionError):
        ControlPair(uniform_grid(1.0, 10), np.zeros((9, 2)))
    nu = JumpMeasureSpec.finite([0.0], [1.0])
    with pytest.raises(DomainError):
        ControlPair(uniform_grid(1.0, 2), np.zeros((2, 1)), -np.ones((2, 1)), nu)


def test_blowup_is_reported_with_time():
    # the explicit cubic term is unstable for large data on a coarse grid
    m = allen_cahn_model(0.1, Basis(n_modes=2))
    with pytest.raises(BlowUpError) as info:
        solve_skeleton(m, ControlPair.null(uniform_grid(1.0, 4), 2), GalerkinState([100.0, 0.0], m.basis))
    assert info.value.t == 0.5


def test_costs():
    nu = JumpMeasureSpec.finite([0.0, 1.0], [1.0, 2.0])
    times = uniform_grid(2.0, 4)
    q = ControlPair.constant(times, [1.0, 1.0], np.e, nu)
    assert q.gaussian_cost() == pytest.approx(2.0)
    assert q.jump_cost() == pytest.approx(2.0 * 3.0)
    assert q.in_budget(6.0) and not q.in_budget(5.0)


def test_trajectory_csv_round_trip(tmp_path):
    b = Basis(n_modes=3)
    m = allen_cahn_model(0.1, b)
    times = uniform_grid(0.2, 16)
    traj = solve_skeleton(m, ControlPair.constant(times, [1.0, 0, 0.5]), GalerkinState([0.2, 0.1, 0], b))
    path = traj.to_csv(tmp_path / "t.csv")
    back = Trajectory.from_csv(path)
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.times, traj.times)
    assert back.sup_distance(traj) == 0.0


def test_random_controls_respect_budget():
    b = Basis(n_modes=4)
    jump = default_jump(b, "saturated")
    qs = random_controls(10, uniform_grid(1.0, 64), 4, 0.7, rng=3, nu=jump.measure)
    assert all(q.in_budget() for q in qs)
    assert max(q.jump_cost() for q in qs) > 0.1


def test_energy_audit_on_shipped_models():
    b = Basis(n_modes=16)
    times = uniform_grid(1.0, 256)
    for factory in (heat_model, burgers_model, allen_cahn_model):
        m = factory(basis=b, jump=default_jump(b, "saturated"))
        for q in random_controls(5, times, 16, 1.0, rng=2, nu=m.jump.measure):
            x0 = GalerkinState.unit(b, 1, 0.5)
            rec = energy_audit(solve_skeleton(m, q, x0), m, q)
            assert rec.passed and rec.lhs > 0


def test_continuity_trend_for_shrinking_controls():
    m = heat_model(0.5, Basis(n_modes=4))
    times = uniform_grid(1.0, 64)
    base = ControlPair.constant(times, [1.0, 0.5, 0, 0])
    limit = ControlPair.null(times, 4)
    res = continuity_experiment(m, [base.scaled(1 / k) for k in range(1, 6)], limit, GalerkinState.zeros(m.basis))
    assert res.monotone and res.trend == pytest.approx(-1.0, abs=1e-9)


def test_energy_audit_rejects_corrupted_trajectory():
    b = Basis(n_modes=8)
    m = heat_model(0.1, b)
    times = uniform_grid(1.0, 128)
    q = ControlPair.null(times, 8)
    traj = solve_skeleton(m, q, GalerkinState.unit(b))
    assert energy_audit(traj, m, q).passed
    bad = traj.states.copy()
    bad[1:] *= 10
    assert not energy_audit(Trajectory(times, bad, b), m, q).passed


def test_rerun_is_bit_identical_and_stable_in_x0():
    b = Basis(n_modes=8)
    m = allen_cahn_model(0.1, b)
    times = uniform_grid(1.0, 256)
    q = ControlPair.constant(times, 0.3 * np.ones(8))
    x0 = GalerkinState.unit(b, 1, 0.5)
    a, c = solve_skeleton(m, q, x0), solve_skeleton(m, q, x0)
    assert a.states.tobytes() == c.states.tobytes()
    for delta in (1e-3, 1e-5):
        moved = solve_skeleton(m, q, GalerkinState(x0.coeffs + delta / np.sqrt(8), b))
        assert moved.sup_distance(a) <= np.exp(2.0) * delta
