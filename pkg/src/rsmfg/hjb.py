"""Backward grid solvers for the risk-sensitive HJB and robust HJI equations.

Risk-sensitive equation (solved backward from v(T, x) = g(x)):

    dv/dt + inf_u { f dv/dx + c } + (eps/2) sigma^2 d2v/dx2
          + (eps/(2 delta)) (sigma dv/dx)^2 = 0

The robust variant replaces the quadratic gradient term by a numerical
sup over an adversarial disturbance grid,

    sup_zeta { sigma zeta dv/dx - rho^2 zeta^2 },   rho^2 = delta/(2 eps),

whose exact maximizer zeta* = sigma dv/dx / (2 rho^2) reproduces the same
PDE; the two solves agree up to the disturbance-grid resolution.

Scheme: explicit monotone upwinding for the advection term (one-sided
difference picked by the drift sign), centered differences for diffusion
and for the quadratic gradient source term, one-sided differences at the
boundary nodes, hard CFL enforcement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import kernels
from .model import (CouplingFeatures, DensityTrajectory, Grid1D, ModelSpec,
                    TimeGrid, ValueTrajectory)

__all__ = [
    "HJBSolveOptions",
    "CFLViolation",
    "NonFiniteValue",
    "RobustSolution",
    "solve_hjb",
    "solve_hji_robust",
    "extract_feedback",
    "affine_quadratic_feedback",
    "write_value_csv",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class CFLViolation(RuntimeError):
    pass


class NonFiniteValue(RuntimeError):
    pass


@dataclass(frozen=True)
class HJBSolveOptions:
    scheme: Literal["explicit-upwind"] = "explicit-upwind"
    control_resolution: int = 129
    mode: Literal["risk_sensitive", "robust", "risk_neutral"] = "risk_sensitive"
    golden_iterations: int = 16
    disturbance_resolution: int = 129

    def __post_init__(self):
        if self.control_resolution < 3:
            raise ValueError("control_resolution must be >= 3")


@dataclass(frozen=True)
class RobustSolution:
    """Robust solve output: value trajectory plus the disturbance field."""

    value: ValueTrajectory
    disturbance: np.ndarray  # (nt, nx) maximizing zeta per node


def _centered_gradient(v: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * dx)
    out[0] = (v[1] - v[0]) / dx
    out[-1] = (v[-1] - v[-2]) / dx
    return out


def _second_diff(v: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / (dx * dx)
    out[0] = (v[2] - 2 * v[1] + v[0]) / (dx * dx)
    out[-1] = (v[-1] - 2 * v[-2] + v[-3]) / (dx * dx)
    return out


def _check_cfl(dt: float, dx: float, eps: float, sig: np.ndarray,
               f_max: float, t: float) -> None:
    bound = dx * dx / (eps * float(np.max(sig)) ** 2 + f_max * dx)
    if dt > bound * (1 + 1e-12):
        raise CFLViolation(
            f"dt={dt:.6g} exceeds CFL bound {bound:.6g} at t={t:.6g}")


def _upwind_advection(f: np.ndarray, dp: np.ndarray, dm: np.ndarray) -> np.ndarray:
    return np.where(f > 0.0, f * dp, f * dm)


def _golden_refine(model: ModelSpec, t: float, x: np.ndarray,
                   coupling: CouplingFeatures, dp: np.ndarray, dm: np.ndarray,
                   lo: np.ndarray, hi: np.ndarray, iterations: int
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized golden-section refinement of the control per node."""

    def objective(u):
        f = model.drift(t, x, u, coupling)
        c = model.running_cost(t, x, u, coupling)
        return _upwind_advection(np.asarray(f, dtype=float), dp, dm) + c

    a, b = lo.copy(), hi.copy()
    c1 = b - _GOLDEN * (b - a)
    c2 = a + _GOLDEN * (b - a)
    f1, f2 = objective(c1), objective(c2)
    for _ in range(iterations):
        take_left = f1 < f2
        b = np.where(take_left, c2, b)
        a = np.where(take_left, a, c1)
        c1 = b - _GOLDEN * (b - a)
        c2 = a + _GOLDEN * (b - a)
        f1, f2 = objective(c1), objective(c2)
    u = 0.5 * (a + b)
    return u, objective(u)


def _coupling_for_row(coupling: DensityTrajectory, row: int) -> CouplingFeatures:
    m = coupling.values[row]
    mean = coupling.grid.dx * float(np.dot(coupling.grid.nodes, m))
    return CouplingFeatures(mean=mean, density_at_x=m)


def _solve_backward(model: ModelSpec, coupling: DensityTrajectory, g: Grid1D,
                    t: TimeGrid, opts: HJBSolveOptions, robust: bool):
    if coupling.grid != g or coupling.times != t:
        raise ValueError("coupling trajectory must live on the same grids")
    x = g.nodes
    dx, dt = g.dx, t.dt
    nu = opts.control_resolution
    u_grid = np.linspace(model.control_bounds[0], model.control_bounds[1], nu)
    u_cell = u_grid[1] - u_grid[0]

    values = np.empty((t.nt, g.nx))
    control = np.empty((t.nt, g.nx))
    values[-1] = np.asarray(model.terminal_cost(x), dtype=float)
    disturbance = np.zeros((t.nt, g.nx)) if robust else None

    rho_sq = model.rho_sq
    quad_coef = model.epsilon / (2.0 * model.delta)

    # terminal control/disturbance rows from the terminal data
    for s in range(t.nt - 1, 0, -1):
        tv = t.times[s]
        v = values[s]
        cpl = _coupling_for_row(coupling, s)
        sig = np.asarray(model.diffusion(tv, x), dtype=float)
        sig = np.broadcast_to(sig, x.shape).astype(float)

        f_tab = np.asarray(model.drift(tv, x[None, :], u_grid[:, None], cpl), dtype=float)
        c_tab = np.asarray(model.running_cost(tv, x[None, :], u_grid[:, None], cpl), dtype=float)
        f_tab = np.ascontiguousarray(np.broadcast_to(f_tab, (nu, g.nx)))
        c_tab = np.ascontiguousarray(np.broadcast_to(c_tab, (nu, g.nx)))

        _check_cfl(dt, dx, model.epsilon, sig, float(np.max(np.abs(f_tab))), tv)

        ham, arg = kernels.hjb_min_hamiltonian(v, f_tab, c_tab, dx)
        dp, dm = kernels.upwind_gradients(v, dx)
        lo = u_grid[np.maximum(arg - 1, 0)]
        hi = u_grid[np.minimum(arg + 1, nu - 1)]
        u_ref, ham_ref = _golden_refine(model, tv, x, cpl, dp, dm, lo, hi,
                                        opts.golden_iterations)
        better = ham_ref < ham
        u_star = np.where(better, u_ref, u_grid[arg])
        ham = np.where(better, ham_ref, ham)

        vx = _centered_gradient(v, dx)
        vxx = _second_diff(v, dx)
        diffusion_term = 0.5 * model.epsilon * sig**2 * vxx

        if robust:
            grad = sig * vx
            # per-node grid bracketing the maximizer of zeta*g - rho^2 zeta^2
            zeta_max = np.maximum(1.25 * np.abs(grad) / (2.0 * rho_sq), 1e-12)
            unit = np.linspace(-1.0, 1.0, opts.disturbance_resolution)
            zgrid = unit[:, None] * zeta_max[None, :]
            gain = zgrid * grad[None, :] - rho_sq * zgrid**2
            zi = np.argmax(gain, axis=0)
            cols = np.arange(g.nx)
            quad_term = gain[zi, cols]
            disturbance[s - 1] = zgrid[zi, cols]
        elif opts.mode == "risk_neutral":
            quad_term = 0.0
        else:
            quad_term = quad_coef * (sig * vx) ** 2

        v_new = v + dt * (ham + diffusion_term + quad_term)
        if not np.all(np.isfinite(v_new)):
            raise NonFiniteValue(f"non-finite value at t={t.times[s-1]:.6g}")
        values[s - 1] = v_new
        control[s - 1] = np.clip(u_star, *model.control_bounds)

    # terminal row control: minimizes the Hamiltonian built on terminal data
    control[-1] = control[-2] if t.nt > 1 else 0.0
    if robust:
        vx_T = _centered_gradient(values[-1], dx)
        sig_T = np.broadcast_to(np.asarray(model.diffusion(t.horizon, x), dtype=float),
                                x.shape)
        disturbance[-1] = sig_T * vx_T / (2.0 * rho_sq)

    traj = ValueTrajectory(grid=g, times=t, values=values,
                           control=np.clip(control, *model.control_bounds))
    return (traj, disturbance) if robust else traj


def solve_hjb(model: ModelSpec, coupling: DensityTrajectory, g: Grid1D,
              t: TimeGrid, opts: HJBSolveOptions | None = None) -> ValueTrajectory:
    """Solve the risk-sensitive (or risk-neutral) HJB equation backward."""
    opts = opts or HJBSolveOptions()
    if opts.mode == "robust":
        return solve_hji_robust(model, coupling, g, t, opts).value
    return _solve_backward(model, coupling, g, t, opts, robust=False)


def solve_hji_robust(model: ModelSpec, coupling: DensityTrajectory, g: Grid1D,
                     t: TimeGrid, opts: HJBSolveOptions | None = None) -> RobustSolution:
    """Solve the robust (Isaacs) formulation with a gridded disturbance."""
    opts = opts or HJBSolveOptions()
    traj, dist = _solve_backward(model, coupling, g, t, opts, robust=True)
    return RobustSolution(value=traj, disturbance=dist)


def extract_feedback(v: ValueTrajectory) -> np.ndarray:
    """The stored argmin control field of a solved trajectory."""
    return v.control


def affine_quadratic_feedback(v: ValueTrajectory, control_gain: float,
                              control_bounds: tuple[float, float] | None = None
                              ) -> np.ndarray:
    """Analytic feedback -(b/2) dv/dx for drift affine in u and cost c + u^2."""
    dx = v.grid.dx
    out = np.empty_like(v.values)
    for s in range(v.times.nt):
        out[s] = -(control_gain / 2.0) * _centered_gradient(v.values[s], dx)
    if control_bounds is not None:
        out = np.clip(out, *control_bounds)
    return out


def write_value_csv(path, v: ValueTrajectory) -> None:
    """Emit long-format columns t,x,v,u."""
    with open(path, "w") as fh:
        fh.write("t,x,v,u\n")
        for s, tv in enumerate(v.times.times):
            for i, xv in enumerate(v.grid.nodes):
                fh.write(f"{tv:.17g},{xv:.17g},"
                         f"{v.values[s, i]:.17g},{v.control[s, i]:.17g}\n")
