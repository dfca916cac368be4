"""Damped fixed-point coupling of the backward HJB and forward FPK solvers.

One Picard iteration maps a density trajectory to the density produced by
best-responding to it: solve the HJB backward against the current density,
push the initial density forward under the resulting feedback, then relax
with damping theta and renormalize each row.  Convergence is measured by
the sup-norm density change across all rows.

Also hosts the equilibrium verifier and the solvability classifier for the
linear oscillator boundary-value problem that demonstrates how
backward-forward systems can fail to admit solutions at resonant horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .fpk import solve_fpk
from .hjb import HJBSolveOptions, solve_hjb
from .model import (CouplingFeatures, DensityTrajectory, Grid1D, ModelSpec,
                    TimeGrid, ValueTrajectory, sample_initial_density)
from . import kernels

__all__ = [
    "FixedPointReport",
    "VerificationReport",
    "BVPClass",
    "solve_mfg",
    "verify_equilibrium",
    "detect_bvp_solvability",
]


@dataclass
class FixedPointReport:
    iterations: int
    residual_history: list[float]
    converged: bool
    final_gap: float


def solve_mfg(model: ModelSpec, g: Grid1D, t: TimeGrid, theta: float = 0.5,
              tol: float = 1e-6, max_iter: int = 50,
              opts: HJBSolveOptions | None = None
              ) -> tuple[ValueTrajectory, DensityTrajectory, FixedPointReport]:
    """Damped Picard iteration for the mean-field equilibrium pair.

    Returns the last iterate even when not converged; the report's
    ``converged`` flag is the contract.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("damping theta must lie in (0, 1]")
    m0_row = sample_initial_density(model, g)
    m_vals = np.tile(m0_row, (t.nt, 1))  # initial guess: frozen in time
    residuals: list[float] = []
    converged = False
    v = None
    for _ in range(max_iter):
        m_traj = DensityTrajectory(grid=g, times=t, values=m_vals)
        v = solve_hjb(model, m_traj, g, t, opts)
        m_next = solve_fpk(model, v.control, g, t)
        relaxed = (1.0 - theta) * m_vals + theta * m_next.values
        relaxed /= g.dx * relaxed.sum(axis=1, keepdims=True)
        gap = float(np.max(np.abs(relaxed - m_vals)))
        residuals.append(gap)
        m_vals = relaxed
        if gap <= tol:
            converged = True
            break
    report = FixedPointReport(iterations=len(residuals),
                              residual_history=residuals,
                              converged=converged,
                              final_gap=residuals[-1] if residuals else math.inf)
    m_out = DensityTrajectory(grid=g, times=t, values=m_vals)
    return v, m_out, report


@dataclass
class VerificationReport:
    hjb_residual: float
    fpk_residual: float
    control_gap: float          # worst Hamiltonian excess over the grid min
    control_optimal: bool
    terminal_consistent: bool
    threshold: float
    passed: bool
    worst_hjb_node: tuple[int, int] = (0, 0)
    worst_fpk_node: tuple[int, int] = (0, 0)


def _coupling_for_row(m: DensityTrajectory, s: int) -> CouplingFeatures:
    row = m.values[s]
    mean = m.grid.dx * float(np.dot(m.grid.nodes, row))
    return CouplingFeatures(mean=mean, density_at_x=row)


def verify_equilibrium(v: ValueTrajectory, m: DensityTrajectory,
                       model: ModelSpec, threshold: float | None = None,
                       control_resolution: int = 129) -> VerificationReport:
    """Check a candidate pair against the discrete optimality system.

    (1) HJB residual under the stored control, (2) the stored control
    attains the control-grid Hamiltonian minimum within one control cell,
    (3) FPK residual of the density under the stored control.  Residuals
    are one-sided in time, so a consistent pair scores O(dx + dt); the
    default threshold is 10 (dx + dt) scaled by the value magnitude.
    """
    g, t = v.grid, v.times
    x, dx, dt = g.nodes, g.dx, t.dt
    if threshold is None:
        threshold = 10.0 * (dx + dt) * max(1.0, float(np.max(np.abs(v.values))),
                                           float(np.max(np.abs(m.values))))
    u_grid = np.linspace(model.control_bounds[0], model.control_bounds[1],
                         control_resolution)
    u_cell = u_grid[1] - u_grid[0]
    quad_coef = model.epsilon / (2.0 * model.delta)

    terminal_consistent = bool(
        np.array_equal(v.values[-1], np.asarray(model.terminal_cost(x), dtype=float)))

    worst_hjb = 0.0
    worst_fpk = 0.0
    worst_ctrl = 0.0
    worst_hjb_node = (0, 0)
    worst_fpk_node = (0, 0)
    for s in range(t.nt - 1):
        tv = t.times[s + 1]
        cpl = _coupling_for_row(m, s + 1)
        sig = np.broadcast_to(np.asarray(model.diffusion(tv, x), dtype=float), x.shape)
        row = v.values[s + 1]
        dp, dm_ = kernels.upwind_gradients(row, dx)
        u = v.control[s + 1]
        f = np.broadcast_to(np.asarray(model.drift(tv, x, u, cpl), dtype=float), x.shape)
        c = np.broadcast_to(np.asarray(model.running_cost(tv, x, u, cpl), dtype=float), x.shape)
        adv = np.where(f > 0, f * dp, f * dm_)
        vx = np.gradient(row, dx)
        vxx = np.empty_like(row)
        vxx[1:-1] = (row[2:] - 2 * row[1:-1] + row[:-2]) / (dx * dx)
        vxx[0] = vxx[1]
        vxx[-1] = vxx[-2]
        dtv = (row - v.values[s]) / dt
        res = dtv + adv + c + 0.5 * model.epsilon * sig**2 * vxx \
            + quad_coef * (sig * vx) ** 2
        r = float(np.max(np.abs(res[1:-1])))
        if r > worst_hjb:
            worst_hjb, worst_hjb_node = r, (s + 1, int(np.argmax(np.abs(res[1:-1]))) + 1)

        # control-grid minimality of the stored control
        f_tab = np.asarray(model.drift(tv, x[None, :], u_grid[:, None], cpl), dtype=float)
        c_tab = np.asarray(model.running_cost(tv, x[None, :], u_grid[:, None], cpl), dtype=float)
        f_tab = np.ascontiguousarray(np.broadcast_to(f_tab, (len(u_grid), g.nx)))
        c_tab = np.ascontiguousarray(np.broadcast_to(c_tab, (len(u_grid), g.nx)))
        ham_min, arg = kernels.hjb_min_hamiltonian(row, f_tab, c_tab, dx)
        stored_ham = adv + c
        scale = np.maximum(1.0, np.abs(ham_min))
        near = np.abs(u - u_grid[arg]) <= u_cell + 1e-12
        excess = np.where(near, 0.0, (stored_ham - ham_min) / scale)
        worst_ctrl = max(worst_ctrl, float(np.max(excess)))

        # FPK residual under the same control
        m_row = m.values[s]
        cpl0 = _coupling_for_row(m, s)
        u0 = v.control[s]
        vel = np.broadcast_to(
            np.asarray(model.drift(t.times[s], x, u0, cpl0), dtype=float), x.shape)
        sig0 = np.broadcast_to(
            np.asarray(model.diffusion(t.times[s], x), dtype=float), x.shape)
        sig_iface = 0.5 * (sig0[:-1] + sig0[1:])
        predicted = kernels.fpk_step(m_row, vel.astype(float),
                                     np.ascontiguousarray(0.5 * model.epsilon * sig_iface**2),
                                     dx, dt)
        res_f = (m.values[s + 1] - predicted) / dt
        rf = float(np.max(np.abs(res_f)))
        if rf > worst_fpk:
            worst_fpk, worst_fpk_node = rf, (s, int(np.argmax(np.abs(res_f))))

    control_optimal = worst_ctrl <= 1e-9
    passed = (worst_hjb <= threshold and worst_fpk <= threshold
              and control_optimal and terminal_consistent)
    return VerificationReport(hjb_residual=worst_hjb, fpk_residual=worst_fpk,
                              control_gap=worst_ctrl,
                              control_optimal=control_optimal,
                              terminal_consistent=terminal_consistent,
                              threshold=threshold, passed=passed,
                              worst_hjb_node=worst_hjb_node,
                              worst_fpk_node=worst_fpk_node)


class BVPClass(Enum):
    UNIQUE = "Unique"
    NO_SOLUTION = "NoSolution"
    INFINITELY_MANY = "InfinitelyMany"


SINGULARITY_TOL = 1e-9


def detect_bvp_solvability(m0: float, T: float) -> BVPClass:
    """Classify the linear-oscillator two-point boundary value problem.

    Shooting on the rotation system with m(0) = m0 and the mixed terminal
    condition v(T) = -m(T): the unknown v(0) = a satisfies the scalar
    linear equation alpha(T) a = beta(T) m0 with alpha = cos T + sin T and
    beta = sin T - cos T.  Resonant horizons (alpha = 0) occur at
    T = 3*pi/4 + k*pi, where the problem has no solution for m0 != 0 and
    infinitely many for m0 = 0.
    """
    if T <= 0:
        raise ValueError("T must be > 0")
    alpha = math.cos(T) + math.sin(T)
    beta = math.sin(T) - math.cos(T)
    if abs(alpha) > SINGULARITY_TOL:
        return BVPClass.UNIQUE
    if abs(beta * m0) > SINGULARITY_TOL:
        return BVPClass.NO_SOLUTION
    return BVPClass.INFINITELY_MANY


def bvp_shooting_solution(m0: float, T: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form sinusoid solving the oscillator BVP when it is unique.

    Returns (t, v, m) sampled on 201 points; raises if the horizon is
    resonant.
    """
    if detect_bvp_solvability(m0, T) is not BVPClass.UNIQUE:
        raise ValueError("BVP is not uniquely solvable at this horizon")
    alpha = math.cos(T) + math.sin(T)
    beta = math.sin(T) - math.cos(T)
    a = beta * m0 / alpha
    ts = np.linspace(0.0, T, 201)
    v = a * np.cos(ts) - m0 * np.sin(ts)
    m = a * np.sin(ts) + m0 * np.cos(ts)
    return ts, v, m
