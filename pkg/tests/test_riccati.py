import numpy as np
import pytest

from rsmfg.model import TimeGrid
from rsmfg.riccati import (FiniteTimeBlowup, LQSpec, closed_form_z_constant,
                           lq_feedback, lq_value, solve_offset_ode,
                           solve_riccati_scalar)


def affine_spec():
    # state cost 1.2, terminal 0.1, sigma=2, eps=5, delta=1e5, frozen mean 1
    return LQSpec(q=lambda t: 1.2, q_terminal=0.1, sigma=2.0, rho_sq=1e4,
                  epsilon=5.0, lambda_shift=lambda t, mean: mean,
                  coupling_mean=lambda t: 1.0)


def test_zero_data_zero_solution():
    spec = LQSpec(q=lambda t: 0.0, q_terminal=0.0)
    sol = solve_riccati_scalar(spec, TimeGrid(2.0, 101))
    assert np.all(sol.z == 0.0)


def test_affine_instance_matches_closed_form():
    t = TimeGrid(5.0, 5001)
    spec = affine_spec()
    sol = solve_riccati_scalar(spec, t)
    cf = closed_form_z_constant(0.2, 0.1, spec.curvature, 5.0, t.times)
    assert np.max(np.abs(sol.z - cf)) < 1e-6
    assert sol.z[-1] == pytest.approx(0.1)
    # frozen oracle: value of z at t=0 computed once from the closed form
    assert sol.z[0] == pytest.approx(0.4408593306300, abs=1e-10)


def test_mean_reverting_instance_matches_closed_form():
    # q=1, sigma=1, rho^2=4, so curvature 3/4; zero terminal data
    t = TimeGrid(1.0, 2001)
    spec = LQSpec(q=lambda t: 1.0, q_terminal=0.0, sigma=1.0, rho_sq=4.0,
                  epsilon=1.0)
    sol = solve_riccati_scalar(spec, t)
    cf = closed_form_z_constant(1.0, 0.0, spec.curvature, 1.0, t.times)
    assert np.max(np.abs(sol.z - cf)) < 1e-6
    # frozen oracle: sqrt(4/3) * tanh(sqrt(3/4)) at t=0
    assert sol.z[0] == pytest.approx(np.sqrt(4 / 3) * np.tanh(np.sqrt(0.75)),
                                     abs=1e-9)


def test_closed_form_tan_branch_negative_curvature():
    # curvature < 0 gives the oscillatory branch; verify against RK4
    t = TimeGrid(1.0, 2001)
    spec = LQSpec(q=lambda t: 1.0, q_terminal=0.0, sigma=2.0, rho_sq=2.0,
                  epsilon=1.0)  # curvature = 1 - 4/2 = -1
    sol = solve_riccati_scalar(spec, t)
    cf = closed_form_z_constant(1.0, 0.0, spec.curvature, 1.0, t.times)
    assert np.max(np.abs(sol.z - cf)) < 1e-6


def test_blowup_detected():
    # conjugate point: curvature -1, q=1 blows up once sqrt(q)*(T-t)
    # passes pi/2; horizon 4 crosses it
    spec = LQSpec(q=lambda t: 1.0, q_terminal=0.0, sigma=2.0, rho_sq=2.0)
    with pytest.raises(FiniteTimeBlowup):
        solve_riccati_scalar(spec, TimeGrid(4.0, 4001))


def test_offset_trivial_cases():
    t = TimeGrid(2.0, 401)
    spec = LQSpec(q=lambda t: 1.0, q_terminal=0.0)  # coupling_mean defaults to 0
    z = solve_riccati_scalar(spec, t)
    k = solve_offset_ode(spec, z, t)
    assert np.max(np.abs(k.k)) == 0.0


def test_offset_frozen_z_closed_form():
    # constant z = z0, constant M = 1: k(t) = 1 - exp(z0 (t - T))
    t = TimeGrid(2.0, 2001)
    z0 = 0.7
    spec = LQSpec(q=lambda t: 0.0, q_terminal=0.0,
                  coupling_mean=lambda t: 1.0)
    z = solve_riccati_scalar(spec, t)
    frozen = type(z)(times=t, z=np.full(t.nt, z0), k=z.k)
    k = solve_offset_ode(spec, frozen, t)
    assert k.k[0] == pytest.approx(1.0 - np.exp(z0 * (0.0 - 2.0)), abs=1e-8)


def test_lq_value_terminal_and_origin():
    t = TimeGrid(1.0, 101)
    spec = LQSpec(q=lambda t: 0.0, q_terminal=0.0)
    z = solve_riccati_scalar(spec, t)
    assert lq_value(spec, z, 3.0, t.nt - 1) == 0.0
    spec2 = affine_spec()
    z2 = solve_riccati_scalar(spec2, t)
    assert lq_value(spec2, z2, 2.0, t.nt - 1) == pytest.approx(0.1 * 4.0)


def test_lq_feedback():
    t = TimeGrid(1.0, 3)
    z = solve_riccati_scalar(LQSpec(q=lambda t: 0.0, q_terminal=0.0), t)
    flat = type(z)(times=t, z=np.zeros(t.nt), k=np.zeros(t.nt))
    spec = LQSpec(q=lambda t: 0.0, q_terminal=0.0)
    assert lq_feedback(spec, flat, 5.0, 0) == 0.0
    two = type(z)(times=t, z=np.full(t.nt, 2.0), k=np.zeros(t.nt))
    assert lq_feedback(spec, two, 3.0, 1) == pytest.approx(-6.0)
    assert lq_feedback(spec, two, 3.0, 1, control_bounds=(-4.0, 4.0)) == -4.0


def test_riccati_comparison_with_risk_neutral():
    # rho^2 -> inf recovers the standard Riccati flow; monotone in 1/rho^2
    t = TimeGrid(2.0, 1001)
    base = LQSpec(q=lambda t: 1.0, q_terminal=0.5, sigma=1.0, rho_sq=1e12)
    sens = LQSpec(q=lambda t: 1.0, q_terminal=0.5, sigma=1.0, rho_sq=2.0)
    zb = solve_riccati_scalar(base, t)
    zs = solve_riccati_scalar(sens, t)
    assert np.all(zs.z[:-1] > zb.z[:-1])
