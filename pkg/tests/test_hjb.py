import numpy as np
import pytest

from rsmfg.hjb import (CFLViolation, HJBSolveOptions, affine_quadratic_feedback,
                       solve_hjb, solve_hji_robust)
from rsmfg.model import (DensityTrajectory, Grid1D, ModelSpec, TimeGrid,
                         sample_initial_density)
from rsmfg.riccati import LQSpec, lq_value, solve_riccati_scalar


def gaussian(mean, var):
    return lambda x: np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * np.pi * var)


def lq_model(**kw):
    defaults = dict(
        drift=lambda t, x, u, c: u,
        diffusion=lambda t, x: 2.0 * np.ones_like(np.asarray(x, float)),
        running_cost=lambda t, x, u, c: 0.2 * x**2 + u**2,
        terminal_cost=lambda x: 0.1 * np.asarray(x, float) ** 2,
        delta=1e5, epsilon=5.0, control_bounds=(-25.0, 25.0),
        initial_density=gaussian(1.0, 1.0))
    defaults.update(kw)
    return ModelSpec(**defaults)


def frozen_density(model, g, t):
    return DensityTrajectory(grid=g, times=t,
                             values=np.tile(sample_initial_density(model, g),
                                            (t.nt, 1)))


@pytest.fixture(scope="module")
def lq_setup():
    g = Grid1D(-19.0, 21.0, 201)
    t = TimeGrid(5.0, 3501)
    model = lq_model()
    return model, g, t, frozen_density(lq_model(), g, t)


def test_constant_terminal_zero_cost_is_invariant():
    model = lq_model(running_cost=lambda t, x, u, c: 0.0 * x + 0.0 * u,
                     terminal_cost=lambda x: 7.0 * np.ones_like(np.asarray(x, float)))
    g = Grid1D(-2.0, 2.0, 41)
    t = TimeGrid(0.5, 2001)
    v = solve_hjb(model, frozen_density(model, g, t), g, t)
    assert np.max(np.abs(v.values - 7.0)) < 1e-12


def test_cfl_violation_raises():
    model = lq_model()
    g = Grid1D(-19.0, 21.0, 201)
    t = TimeGrid(5.0, 101)  # dt far above the stable bound
    with pytest.raises(CFLViolation):
        solve_hjb(model, frozen_density(model, g, t), g, t)


def test_value_matches_riccati_oracle(lq_setup):
    model, g, t, frozen = lq_setup
    v = solve_hjb(model, frozen, g, t)
    spec = LQSpec(q=lambda s: 1.2, q_terminal=0.1, sigma=2.0, rho_sq=1e4,
                  epsilon=5.0, lambda_shift=lambda s, m: m,
                  coupling_mean=lambda s: 1.0)
    z = solve_riccati_scalar(spec, t)
    exact = np.array([lq_value(spec, z, xv, 0) for xv in g.nodes])
    rel = np.abs(v.values[0] - exact) / np.maximum(np.abs(exact), 1.0)
    assert rel.max() < 2e-2


def test_feedback_matches_riccati_gain(lq_setup):
    model, g, t, frozen = lq_setup
    v = solve_hjb(model, frozen, g, t)
    spec = LQSpec(q=lambda s: 1.2, q_terminal=0.1, sigma=2.0, rho_sq=1e4,
                  epsilon=5.0, lambda_shift=lambda s, m: m,
                  coupling_mean=lambda s: 1.0)
    z = solve_riccati_scalar(spec, t)
    x = g.nodes
    interior = slice(30, 171)
    for s in (0, t.nt // 2):
        expected = -z.z[s] * x[interior]
        got = v.control[s][interior]
        scale = np.maximum(np.abs(expected), 1.0)
        assert np.max(np.abs(got - expected) / scale) < 5e-2


def test_analytic_feedback_within_one_control_cell(lq_setup):
    model, g, t, frozen = lq_setup
    opts = HJBSolveOptions(control_resolution=129)
    v = solve_hjb(model, frozen, g, t, opts)
    analytic = affine_quadratic_feedback(v, 1.0, model.control_bounds)
    u_cell = (model.control_bounds[1] - model.control_bounds[0]) / 128
    interior = slice(5, -5)
    gap = np.abs(analytic[:-1, interior] - v.control[:-1, interior])
    assert gap.max() < 2 * u_cell


def test_risk_neutral_limit(lq_setup):
    _, g_big, _, _ = lq_setup
    g = Grid1D(-9.0, 11.0, 101)
    t = TimeGrid(1.0, 701)
    model_big_delta = lq_model(delta=1e8)
    frozen = frozen_density(model_big_delta, g, t)
    v_rs = solve_hjb(model_big_delta, frozen, g, t)
    v_rn = solve_hjb(model_big_delta, frozen, g, t,
                     HJBSolveOptions(mode="risk_neutral"))
    assert np.max(np.abs(v_rs.values - v_rn.values)) < 1e-4


def test_robust_zero_data():
    model = lq_model(running_cost=lambda t, x, u, c: 0.0 * x + 0.0 * u,
                     terminal_cost=lambda x: np.zeros_like(np.asarray(x, float)))
    g = Grid1D(-2.0, 2.0, 41)
    t = TimeGrid(0.5, 2001)
    sol = solve_hji_robust(model, frozen_density(model, g, t), g, t)
    assert np.max(np.abs(sol.value.values)) < 1e-12
    assert np.max(np.abs(sol.disturbance)) < 1e-12


def test_robust_matches_risk_sensitive():
    g = Grid1D(-9.0, 11.0, 101)
    t = TimeGrid(1.0, 701)
    model = lq_model(delta=100.0)
    frozen = frozen_density(model, g, t)
    v_rs = solve_hjb(model, frozen, g, t)
    rob = solve_hji_robust(model, frozen, g, t)
    assert np.max(np.abs(v_rs.values - rob.value.values)) < 5e-3


def test_robust_terminal_disturbance_closed_form():
    g = Grid1D(-9.0, 11.0, 101)
    t = TimeGrid(1.0, 701)
    model = lq_model(delta=100.0)
    rob = solve_hji_robust(model, frozen_density(model, g, t), g, t)
    x = g.nodes
    # terminal data 0.1 x^2: maximizer sigma * g'(x) / (2 rho^2)
    expected = 2.0 * (0.2 * x) / (2.0 * model.rho_sq)
    interior = slice(1, -1)
    assert np.max(np.abs(rob.disturbance[-1][interior] - expected[interior])) < 1e-2


def test_options_validation():
    with pytest.raises(ValueError):
        HJBSolveOptions(control_resolution=2)
