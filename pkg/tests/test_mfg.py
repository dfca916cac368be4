import math

import numpy as np
import pytest

from rsmfg.mfg import (BVPClass, bvp_shooting_solution, detect_bvp_solvability,
                       solve_mfg, verify_equilibrium)
from rsmfg.model import Grid1D, ModelSpec, TimeGrid, density_moments


def gaussian(mean, var):
    return lambda x: np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * np.pi * var)


def decoupled_model():
    return ModelSpec(
        drift=lambda t, x, u, c: u,
        diffusion=lambda t, x: np.ones_like(np.asarray(x, float)),
        running_cost=lambda t, x, u, c: x**2 + u**2,
        terminal_cost=lambda x: np.zeros_like(np.asarray(x, float)),
        delta=1e4, epsilon=1.0, control_bounds=(-8.0, 8.0),
        initial_density=gaussian(0.5, 0.5))


def test_decoupled_converges_in_one_corrective_iteration():
    g = Grid1D(-5.0, 6.0, 111)
    t = TimeGrid(0.5, 501)
    # undamped: the Picard map is constant, so the second pass must land
    v, m, report = solve_mfg(decoupled_model(), g, t, theta=1.0, tol=1e-6)
    assert report.converged
    assert report.iterations == 2
    assert report.residual_history[1] <= 1e-6


def test_damping_theta_scales_first_residual():
    g = Grid1D(-5.0, 6.0, 111)
    t = TimeGrid(0.5, 501)
    _, _, full = solve_mfg(decoupled_model(), g, t, theta=1.0, tol=1e-12,
                           max_iter=1)
    _, _, half = solve_mfg(decoupled_model(), g, t, theta=0.5, tol=1e-12,
                           max_iter=1)
    assert half.residual_history[0] == pytest.approx(
        0.5 * full.residual_history[0], rel=1e-10)


def test_theta_validation():
    g = Grid1D(-5.0, 6.0, 111)
    t = TimeGrid(0.5, 501)
    with pytest.raises(ValueError):
        solve_mfg(decoupled_model(), g, t, theta=0.0)
    with pytest.raises(ValueError):
        solve_mfg(decoupled_model(), g, t, theta=1.5)


def test_unconverged_reported_not_raised():
    g = Grid1D(-5.0, 6.0, 111)
    t = TimeGrid(0.5, 501)
    v, m, report = solve_mfg(decoupled_model(), g, t, theta=0.5, tol=1e-14,
                             max_iter=2)
    assert not report.converged
    assert v is not None and m is not None
    assert report.final_gap > 1e-14


@pytest.fixture(scope="module")
def decoupled_solution():
    g = Grid1D(-5.0, 6.0, 111)
    t = TimeGrid(0.5, 501)
    model = decoupled_model()
    v, m, report = solve_mfg(model, g, t, theta=1.0, tol=1e-6)
    assert report.converged
    return model, g, t, v, m


def test_verify_equilibrium_passes(decoupled_solution):
    model, g, t, v, m = decoupled_solution
    rep = verify_equilibrium(v, m, model)
    assert rep.passed, rep


def test_verify_flags_perturbed_control(decoupled_solution):
    model, g, t, v, m = decoupled_solution
    from dataclasses import replace
    bad = replace(v, control=np.clip(v.control + 0.5, *model.control_bounds))
    rep = verify_equilibrium(bad, m, model)
    assert not rep.control_optimal


def test_verify_flags_terminal_mismatch(decoupled_solution):
    model, g, t, v, m = decoupled_solution
    from dataclasses import replace
    values = v.values.copy()
    values[-1] += 1.0
    bad = replace(v, values=values)
    rep = verify_equilibrium(bad, m, model)
    assert not rep.terminal_consistent


def test_bvp_classifications():
    assert detect_bvp_solvability(1.0, 7 * math.pi / 4) is BVPClass.NO_SOLUTION
    assert detect_bvp_solvability(0.0, 7 * math.pi / 4) is BVPClass.INFINITELY_MANY
    assert detect_bvp_solvability(1.0, math.pi / 2) is BVPClass.UNIQUE
    assert detect_bvp_solvability(0.5, 1.0) is BVPClass.UNIQUE


def test_bvp_shooting_solution_satisfies_boundaries():
    ts, v, m = bvp_shooting_solution(1.0, math.pi / 2)
    assert m[0] == pytest.approx(1.0, abs=1e-12)
    assert v[-1] == pytest.approx(-m[-1], abs=1e-12)
    # the sinusoid solves v' = -m, m' = v on the grid (spectral accuracy
    # not expected from finite differences; check the exact derivative)
    dt = ts[1] - ts[0]
    dv = np.gradient(v, dt)
    dm = np.gradient(m, dt)
    assert np.max(np.abs(dv[1:-1] + m[1:-1])) < 1e-3
    assert np.max(np.abs(dm[1:-1] - v[1:-1])) < 1e-3


def test_bvp_no_solution_has_no_shooting_solution():
    with pytest.raises(ValueError):
        bvp_shooting_solution(1.0, 7 * math.pi / 4)
