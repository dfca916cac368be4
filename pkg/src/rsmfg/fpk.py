"""Forward finite-volume solver for the Fokker-Planck-Kolmogorov equation.

    dm/dt + d/dx( m * f(t, x, u*(t,x), coupling) ) = (eps/2) d/dx( sigma^2 dm/dx )

with zero total flux at both boundaries.  The advective flux is first-order
upwind by the sign of the interface velocity; the diffusive flux is
centered.  Interior fluxes telescope, so mass is conserved exactly up to
roundoff.  The mean-field coupling (population mean, local density) is
recomputed from the current row before every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .model import (CouplingFeatures, DensityTrajectory, Grid1D, ModelSpec,
                    TimeGrid, sample_initial_density)

__all__ = [
    "CFLViolation",
    "MassDrift",
    "FPKStepReport",
    "solve_fpk",
    "stationarity_residual",
    "write_density_csv",
    "write_density_summary_csv",
]

from .hjb import CFLViolation  # shared CFL budget with the backward solver


class MassDrift(RuntimeError):
    """Per-step mass error exceeded the conservation tolerance."""


MASS_STEP_TOL = 1e-10


@dataclass
class FPKStepReport:
    """Bookkeeping for one forward solve; large clip counts indicate an
    under-resolved run."""

    negative_clips: int = 0
    max_mass_drift: float = 0.0
    min_pre_clip_value: float = 0.0


def _control_row(control, s: int, t: float, x: np.ndarray) -> np.ndarray:
    if callable(control):
        return np.asarray(control(t, x), dtype=float)
    arr = np.asarray(control, dtype=float)
    if arr.ndim == 0:
        return np.broadcast_to(arr, x.shape)
    return arr[s]


def solve_fpk(model: ModelSpec, control, g: Grid1D, t: TimeGrid,
              extra_drift: Callable | None = None,
              collect_report: bool = False):
    """March the density forward from the model's initial density.

    control is either an (nt, nx) feedback field or a callable (t, x) -> u.
    extra_drift(t, x), when given, is added to the advective velocity
    (hook for the robust game's fictitious-player term sigma * zeta).
    Returns a DensityTrajectory, or (trajectory, FPKStepReport) when
    collect_report is true.
    """
    x = g.nodes
    dx, dt = g.dx, t.dt
    rows = np.empty((t.nt, g.nx))
    rows[0] = sample_initial_density(model, g)
    report = FPKStepReport()

    for s in range(t.nt - 1):
        tv = t.times[s]
        m = rows[s]
        mean = dx * float(np.dot(x, m))
        coupling = CouplingFeatures(mean=mean, density_at_x=m)
        u = _control_row(control, s, tv, x)
        vel = np.asarray(model.drift(tv, x, u, coupling), dtype=float)
        vel = np.broadcast_to(vel, x.shape).astype(float)
        if extra_drift is not None:
            vel = vel + np.asarray(extra_drift(tv, x), dtype=float)
        sig = np.broadcast_to(np.asarray(model.diffusion(tv, x), dtype=float),
                              x.shape)

        bound = dx * dx / (model.epsilon * float(np.max(sig)) ** 2
                           + float(np.max(np.abs(vel))) * dx)
        if dt > bound * (1 + 1e-12):
            raise CFLViolation(
                f"dt={dt:.6g} exceeds FPK CFL bound {bound:.6g} at t={tv:.6g}")

        sig_iface = 0.5 * (sig[:-1] + sig[1:])
        diff_iface = 0.5 * model.epsilon * sig_iface**2
        m_new = kernels.fpk_step(m, vel, np.ascontiguousarray(diff_iface), dx, dt)

        drift_err = abs(dx * m_new.sum() - dx * m.sum())
        report.max_mass_drift = max(report.max_mass_drift, drift_err)
        if drift_err > MASS_STEP_TOL:
            raise MassDrift(f"mass drift {drift_err:.3e} at t={tv:.6g}")

        neg = m_new < 0
        if np.any(neg):
            report.negative_clips += int(np.count_nonzero(neg))
            report.min_pre_clip_value = min(report.min_pre_clip_value,
                                            float(m_new.min()))
            m_new = np.clip(m_new, 0.0, None)
            m_new /= dx * m_new.sum()
        rows[s + 1] = m_new

    traj = DensityTrajectory(grid=g, times=t, values=rows)
    return (traj, report) if collect_report else traj


def stationarity_residual(model: ModelSpec, control, row: np.ndarray,
                          g: Grid1D, t: float = 0.0) -> float:
    """Max-norm of the discrete FPK right-hand side applied to one row.

    Zero (up to scheme truncation) exactly at a rest point of the
    discretization; a diagnostic, not a proof of stability.
    """
    x = g.nodes
    dx = g.dx
    m = np.asarray(row, dtype=float)
    mean = dx * float(np.dot(x, m))
    coupling = CouplingFeatures(mean=mean, density_at_x=m)
    u = _control_row(control, 0, t, x)
    vel = np.broadcast_to(
        np.asarray(model.drift(t, x, u, coupling), dtype=float), x.shape)
    sig = np.broadcast_to(np.asarray(model.diffusion(t, x), dtype=float), x.shape)
    sig_iface = 0.5 * (sig[:-1] + sig[1:])
    diff_iface = 0.5 * model.epsilon * sig_iface**2
    # rhs = (m_new - m)/dt with dt scaled out of the conservative update
    m_new = kernels.fpk_step(m, vel.astype(float),
                             np.ascontiguousarray(diff_iface), dx, 1.0)
    return float(np.max(np.abs(m_new - m)))


def write_density_csv(path, d: DensityTrajectory) -> None:
    """Emit long-format columns t,x,m."""
    with open(path, "w") as fh:
        fh.write("t,x,m\n")
        for s, tv in enumerate(d.times.times):
            for i, xv in enumerate(d.grid.nodes):
                fh.write(f"{tv:.17g},{xv:.17g},{d.values[s, i]:.17g}\n")


def write_density_summary_csv(path, d: DensityTrajectory) -> None:
    """Emit columns t,mean,variance, one row per time sample."""
    from .model import density_moments
    with open(path, "w") as fh:
        fh.write("t,mean,variance\n")
        for s, tv in enumerate(d.times.times):
            mean, var = density_moments(d, s)
            fh.write(f"{tv:.17g},{mean:.17g},{var:.17g}\n")
