"""Shared domain types: grids, game definitions, trajectories, coupling features.

All solvers in the package operate on a one-dimensional state space
discretized by :class:`Grid1D` and a uniform :class:`TimeGrid`.  A single
game instance is described by :class:`ModelSpec`; the population density and
value function produced by the solvers are carried by
:class:`DensityTrajectory` and :class:`ValueTrajectory`.

Model callables (drift, costs, diffusion) must accept numpy arrays for the
state/control arguments and broadcast, since the grid solvers evaluate them
on whole rows at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Grid1D",
    "TimeGrid",
    "CouplingFeatures",
    "ModelSpec",
    "DensityTrajectory",
    "ValueTrajectory",
    "ValidationReport",
    "density_moments",
    "validate_model",
    "MASS_TOL",
]

# tolerance on |dx * sum(m) - 1| for a valid density row
MASS_TOL = 1e-8


@dataclass(frozen=True)
class Grid1D:
    """Uniform spatial grid with nodes x_i = x_min + i*dx."""

    x_min: float
    x_max: float
    nx: int

    def __post_init__(self):
        if self.nx < 3:
            raise ValueError(f"nx must be >= 3, got {self.nx}")
        if not self.x_min < self.x_max:
            raise ValueError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, horizon] with nt samples."""

    horizon: float
    nt: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.nt < 2:
            raise ValueError(f"nt must be >= 2, got {self.nt}")

    @property
    def dt(self) -> float:
        return self.horizon / (self.nt - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.nt)


@dataclass(frozen=True)
class CouplingFeatures:
    """Mean-field features a model callable may read at a query point.

    ``mean`` is the first moment of the current density; ``density_at_x``
    is the density evaluated at the query state (an array when the query
    is a grid row).
    """

    mean: float
    density_at_x: float | np.ndarray = 0.0


@dataclass(frozen=True)
class ModelSpec:
    """One game instance: dynamics, costs, risk index and noise scale.

    drift(t, x, u, coupling) and running_cost(t, x, u, coupling) must
    broadcast over array-valued x and u.  diffusion(t, x) must be positive
    and independent of the control.  epsilon == 0 is accepted only as a
    deterministic test mode for the Monte Carlo estimator.
    """

    drift: Callable
    diffusion: Callable
    running_cost: Callable
    terminal_cost: Callable
    delta: float
    epsilon: float
    control_bounds: tuple[float, float]
    initial_density: Callable

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        u_min, u_max = self.control_bounds
        if not u_min < u_max:
            raise ValueError("control_bounds must satisfy u_min < u_max")

    @property
    def rho_sq(self) -> float:
        """Disturbance penalty weight of the equivalent robust game."""
        if self.epsilon == 0.0:
            return np.inf
        return self.delta / (2.0 * self.epsilon)


def _check_density_rows(values: np.ndarray, dx: float) -> None:
    if np.any(values < 0):
        raise ValueError("density values must be nonnegative")
    mass = dx * values.sum(axis=1)
    bad = np.abs(mass - 1.0) > MASS_TOL
    if np.any(bad):
        r = int(np.argmax(bad))
        raise ValueError(f"density row {r} has mass {mass[r]:.12g}, expected 1")


@dataclass(frozen=True)
class DensityTrajectory:
    """Time-indexed probability densities m_t on the grid, unit mass per row."""

    grid: Grid1D
    times: TimeGrid
    values: np.ndarray  # (nt, nx), nonnegative

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.times.nt, self.grid.nx):
            raise ValueError(
                f"values shape {values.shape} != (nt, nx) = "
                f"({self.times.nt}, {self.grid.nx})")
        _check_density_rows(values, self.grid.dx)


@dataclass(frozen=True)
class ValueTrajectory:
    """Value function v(t, x) plus the induced feedback control field."""

    grid: Grid1D
    times: TimeGrid
    values: np.ndarray   # (nt, nx)
    control: np.ndarray  # (nt, nx), clipped to the control bounds

    def __post_init__(self):
        for name in ("values", "control"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != (self.times.nt, self.grid.nx):
                raise ValueError(f"{name} shape {arr.shape} != (nt, nx)")


def density_moments(d: DensityTrajectory, row: int) -> tuple[float, float]:
    """Mean and variance of density row ``row`` by the grid quadrature rule."""
    if not -d.times.nt <= row < d.times.nt:
        raise IndexError(f"row {row} out of range for nt={d.times.nt}")
    x = d.grid.nodes
    m = d.values[row]
    dx = d.grid.dx
    mean = dx * float(np.dot(x, m))
    var = dx * float(np.dot((x - mean) ** 2, m))
    return mean, max(var, 0.0)


@dataclass
class ValidationReport:
    ok: bool
    findings: list[str] = field(default_factory=list)
    cfl_dt_max: float = np.inf
    drift_max: float = 0.0
    sigma_max: float = 0.0


def cfl_dt_bound(epsilon: float, sigma_max: float, drift_max: float, dx: float) -> float:
    """Largest stable explicit step: dt <= dx^2 / (eps*sigma_max^2 + |f|_max*dx)."""
    denom = epsilon * sigma_max**2 + drift_max * dx
    return np.inf if denom == 0 else dx * dx / denom


def validate_model(m: ModelSpec, g: Grid1D, t: TimeGrid,
                   n_samples: int = 9) -> ValidationReport:
    """Sample the model on a coarse (t, x, u) lattice and report problems.

    Flags non-finite or negative outputs and a violated CFL bound for the
    explicit grid solvers.  Deterministic: the lattice depends only on the
    grids and n_samples.
    """
    report = ValidationReport(ok=True)
    ts = np.linspace(0.0, t.horizon, n_samples)
    xs = np.linspace(g.x_min, g.x_max, n_samples)
    us = np.linspace(m.control_bounds[0], m.control_bounds[1], n_samples)
    coupling = CouplingFeatures(mean=0.0, density_at_x=np.zeros_like(xs))

    drift_max = 0.0
    sigma_max = 0.0
    for tv in ts:
        sig = np.asarray(m.diffusion(tv, xs), dtype=float)
        if not np.all(np.isfinite(sig)):
            report.findings.append(f"non-finite diffusion at t={tv:g}")
        elif np.any(sig <= 0):
            report.findings.append(f"non-positive diffusion at t={tv:g}")
        else:
            sigma_max = max(sigma_max, float(np.max(sig)))
        for uv in us:
            f = np.asarray(m.drift(tv, xs, uv, coupling), dtype=float)
            c = np.asarray(m.running_cost(tv, xs, uv, coupling), dtype=float)
            if not np.all(np.isfinite(f)):
                report.findings.append(f"non-finite drift at t={tv:g}, u={uv:g}")
            else:
                drift_max = max(drift_max, float(np.max(np.abs(f))))
            if not np.all(np.isfinite(c)):
                report.findings.append(f"non-finite cost at t={tv:g}, u={uv:g}")
            elif np.any(c < 0):
                report.findings.append(f"negative running cost at t={tv:g}, u={uv:g}")
    gv = np.asarray(m.terminal_cost(xs), dtype=float)
    if not np.all(np.isfinite(gv)):
        report.findings.append("non-finite terminal cost")
    elif np.any(gv < 0):
        report.findings.append("negative terminal cost")
    m0 = np.asarray(m.initial_density(xs), dtype=float)
    if np.any(m0 < 0) or not np.all(np.isfinite(m0)):
        report.findings.append("initial density has negative or non-finite values")

    report.drift_max = drift_max
    report.sigma_max = sigma_max
    report.cfl_dt_max = cfl_dt_bound(m.epsilon, sigma_max, drift_max, g.dx)
    if t.dt > report.cfl_dt_max:
        report.findings.append(
            f"CFL violated: dt={t.dt:.6g} > {report.cfl_dt_max:.6g}")
    report.ok = not report.findings
    return report


def sample_initial_density(m: ModelSpec, g: Grid1D) -> np.ndarray:
    """Initial density sampled at nodes and renormalized to unit mass."""
    row = np.asarray(m.initial_density(g.nodes), dtype=float)
    if np.any(row < 0) or not np.all(np.isfinite(row)):
        raise ValueError("initial density must be finite and nonnegative")
    mass = g.dx * row.sum()
    if mass <= 0:
        raise ValueError("initial density has non-positive total mass")
    return row / mass
