import numpy as np
import pytest

from ldpspde._stepping import uniform_grid
from ldpspde.errors import DimensionError, ParameterError
from ldpspde.models import DiffusionSpec, JumpSpec, heat_model, linear_model
from ldpspde.noise import JumpMeasureSpec
from ldpspde.rate import (RateEstimate, RateOptions, TargetSpec, adjoint_gradient, control_cost,
                          gaussian_rate_oracle, minimize_rate, penalized_objective)
from ldpspde.skeleton import ControlPair, solve_skeleton
from ldpspde.spaces import Basis, GalerkinState


def ou_rate(a, y, T=1.0):
    return a * y**2 / (1 - np.exp(-2 * a * T))


def test_control_cost_examples():
    times = uniform_grid(1.0, 4)
    assert control_cost(ControlPair.null(times, 2)) == 0.0
    nu = JumpMeasureSpec.finite([0.0], [2.0])
    q = ControlPair.constant(times, [1.0, 0.0], 0.0, nu)
    assert control_cost(q) == pytest.approx(0.5 + 2.0)
    with pytest.raises(ParameterError):
        control_cost(q, grid=uniform_grid(1.0, 8))


def test_target_contains_and_penalty():
    states = np.zeros((3, 5, 2))
    states[0, -1] = [1.0, 0.0]
    states[2] = np.nan
    half = TargetSpec.halfspace([1.0, 0.0], 0.5)
    np.testing.assert_array_equal(half.contains(states), [True, False, False])
    assert TargetSpec.ball([0, 0], -1.0).contains(states).sum() == 0
    assert TargetSpec.whole().contains(states).all()
    r2, grad = TargetSpec.point([1.0, 1.0]).penalty(states[:2], np.linspace(0, 1, 5))
    np.testing.assert_allclose(r2, [1.0, 2.0])
    assert grad.shape == (2, 5, 2)
    with pytest.raises(ParameterError):
        TargetSpec("cube")


def test_fd_and_adjoint_gradients_agree(ou):
    times = uniform_grid(1.0, 16)
    q = ControlPair.constant(times, [0.3])
    target = TargetSpec.point([0.8])
    x0 = GalerkinState.zeros(ou.basis)
    v1, g1 = penalized_objective(ou, target, x0, q, 10.0, opts=RateOptions(fd="central"))
    v2, g2 = adjoint_gradient(ou, target, x0, q, 10.0)
    assert v1 == pytest.approx(v2, rel=1e-12)
    assert np.linalg.norm(g1 - g2) <= 1e-6 * np.linalg.norm(g2)


def test_brownian_point_rate(brownian):
    est = minimize_rate(brownian, TargetSpec.point([1.0]), GalerkinState.zeros(brownian.basis), uniform_grid(1.0, 64))
    assert est.converged and est.value == pytest.approx(0.5, rel=1e-3)
    assert all(h["objective_end"] <= h["objective_start"] for h in est.history)
    assert est.trajectory.terminal.coeffs[0] == pytest.approx(1.0, abs=1e-3)


def test_ou_matches_closed_form_and_oracle(ou):
    est = minimize_rate(ou, TargetSpec.point([1.0]), GalerkinState.zeros(ou.basis), uniform_grid(1.0, 64))
    assert est.value == pytest.approx(ou_rate(1.0, 1.0), rel=1e-3)
    assert gaussian_rate_oracle(ou, est.trajectory) == pytest.approx(est.value, rel=1e-3)


def test_fd_optimizer_agrees_with_adjoint(ou):
    grid = uniform_grid(1.0, 16)
    x0 = GalerkinState.zeros(ou.basis)
    a = minimize_rate(ou, TargetSpec.point([0.7]), x0, grid, opts=RateOptions(gradient="adjoint", restarts=1))
    b = minimize_rate(ou, TargetSpec.point([0.7]), x0, grid, opts=RateOptions(gradient="fd", restarts=1))
    assert a.value == pytest.approx(b.value, rel=1e-4)


def test_whole_space_rate_is_zero(brownian):
    est = minimize_rate(brownian, TargetSpec.whole(), GalerkinState.zeros(brownian.basis), uniform_grid(1.0, 8))
    assert est.value == 0.0 and est.converged


def test_unreachable_target_is_infinite():
    m = heat_model(0.5, Basis(n_modes=2), DiffusionSpec("additive", [1.0, 0.0]))
    est = minimize_rate(m, TargetSpec.point([0.0, 1.0]), GalerkinState.zeros(m.basis), uniform_grid(0.5, 16),
                        opts=RateOptions(restarts=1))
    assert est.likely_infinite and est.value == np.inf and "∞" in est.message


def test_jump_only_rate_matches_entropy():
    """Constant unit jumps at rate nu: steering to y uses g = y / (nu T), cost nu T l(g)."""
    nu = JumpMeasureSpec.finite([1.0], [1.0])
    m = linear_model(0.0, Basis(n_modes=1), DiffusionSpec("additive", [0.0]),
                     JumpSpec("constant", nu, [1.0], amp_scale=1.0))
    est = minimize_rate(m, TargetSpec.point([1.0]), GalerkinState.zeros(m.basis), uniform_grid(1.0, 8),
                        opts=RateOptions(restarts=1))
    g = 2.0  # drift (g - 1) * nu must cover y = 1 in unit time
    assert est.value == pytest.approx(g * np.log(g) - g + 1, rel=1e-3)


def test_dimension_checks(brownian):
    with pytest.raises(DimensionError):
        minimize_rate(brownian, TargetSpec.point([1.0, 2.0]), GalerkinState.zeros(brownian.basis),
                      uniform_grid(1.0, 8))


def test_minimizer_json_round_trip(tmp_path, brownian):
    est = minimize_rate(brownian, TargetSpec.point([0.5]), GalerkinState.zeros(brownian.basis), uniform_grid(1.0, 8),
                        opts=RateOptions(restarts=1))
    path = est.to_json(tmp_path / "rate.json")
    q = RateEstimate.read_minimizer(path)
    np.testing.assert_array_equal(q.f, est.minimizer.f)
    traj = solve_skeleton(brownian, q, GalerkinState.zeros(brownian.basis))
    assert traj.terminal.coeffs[0] == pytest.approx(0.5, abs=1e-3)


def test_oracle_for_free_path_is_zero(ou):
    times = uniform_grid(1.0, 32)
    traj = solve_skeleton(ou, ControlPair.null(times, 1), GalerkinState.unit(ou.basis))
    assert gaussian_rate_oracle(ou, traj) == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(ParameterError):
        gaussian_rate_oracle(heat_model(0.1, Basis(n_modes=1), DiffusionSpec("multiplicative", [1.0])), traj)
