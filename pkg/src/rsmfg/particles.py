"""Finite-population interacting-particle simulation and measure diagnostics.

Euler-Maruyama steps for the n-particle system, exact one-dimensional
Wasserstein-1 distances, the O(1/sqrt(n)) convergence-rate study against
the grid FPK limit, and Monte Carlo estimation of the exponentiated
(risk-sensitive) cost along a frozen mean field.

Noise is counter-based: the normal increment for particle j at step s is
draw j of a Philox stream keyed by (seed, s), so trajectories are
reproducible bit-exactly and permuting particles together with their
noise indices permutes the trajectories exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .model import CouplingFeatures, DensityTrajectory, ModelSpec

__all__ = [
    "ParticleEnsemble",
    "ParticleCoupling",
    "ConvergenceReport",
    "SimulationFault",
    "step_particles",
    "wasserstein1",
    "convergence_study",
    "estimate_risk_sensitive_cost",
    "sample_from_density",
    "feedback_from_trajectory",
]


class SimulationFault(RuntimeError):
    pass


@dataclass(frozen=True)
class ParticleCoupling(CouplingFeatures):
    """Ensemble aggregates visible to the drift; sine/cosine means support
    pairwise phase-difference couplings (Kuramoto-type presets)."""

    sin_mean: float = 0.0
    cos_mean: float = 1.0


@dataclass(frozen=True)
class ParticleEnsemble:
    n: int
    states: np.ndarray
    rng_seed: int
    time: float = 0.0
    step_index: int = 0
    noise_index: np.ndarray | None = None  # permutation: noise draw per particle

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        object.__setattr__(self, "states", states)
        if self.n < 1 or states.shape != (self.n,):
            raise ValueError("states must have shape (n,) with n >= 1")
        if not np.all(np.isfinite(states)):
            raise ValueError("states must be finite")
        if self.noise_index is None:
            object.__setattr__(self, "noise_index", np.arange(self.n))


def _step_normals(seed: int, step_index: int, n: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1),
                                                    step_index]))
    return gen.standard_normal(n)


def _ensemble_coupling(states: np.ndarray) -> ParticleCoupling:
    # reduce in sorted order so the aggregates are exactly invariant
    # under particle permutation (bit-for-bit exchangeability)
    s = np.sort(states)
    n = s.size
    return ParticleCoupling(mean=float(s.sum() / n),
                            density_at_x=0.0,
                            sin_mean=float(np.sort(np.sin(s)).sum() / n),
                            cos_mean=float(np.sort(np.cos(s)).sum() / n))


def step_particles(e: ParticleEnsemble, model: ModelSpec, control,
                   dt: float) -> ParticleEnsemble:
    """One Euler-Maruyama step of the n-particle system.

    control is a callable (t, states) -> controls (broadcastable) or a
    constant.  Aggregates are computed once per step from the current
    ensemble; the diffusion amplitude is sqrt(eps * dt) * sigma(t, x).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = e.states
    coupling = _ensemble_coupling(x)
    u = control(e.time, x) if callable(control) else control
    f = np.broadcast_to(np.asarray(model.drift(e.time, x, u, coupling),
                                   dtype=float), x.shape)
    sig = np.broadcast_to(np.asarray(model.diffusion(e.time, x), dtype=float),
                          x.shape)
    xi = _step_normals(e.rng_seed, e.step_index, e.n)[e.noise_index]
    new = x + f * dt + np.sqrt(model.epsilon * dt) * sig * xi
    if not np.all(np.isfinite(new)):
        raise SimulationFault(f"non-finite state at step {e.step_index}")
    return replace(e, states=new, time=e.time + dt, step_index=e.step_index + 1)


def simulate(e: ParticleEnsemble, model: ModelSpec, control, dt: float,
             n_steps: int) -> ParticleEnsemble:
    for _ in range(n_steps):
        e = step_particles(e, model, control, dt)
    return e


def wasserstein1(a: Sequence[float], b: Sequence[float]) -> float:
    """Exact W1 between two empirical measures on the line.

    Equal sizes: mean absolute gap of the sorted samples (the optimal
    monotone coupling).  Unequal sizes: integral of the quantile gap over
    the piecewise-constant quantile functions.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("sample sets must be nonempty")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    qs = np.union1d(np.arange(1, a.size) / a.size, np.arange(1, b.size) / b.size)
    edges = np.concatenate(([0.0], qs, [1.0]))
    widths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    qa = a[np.minimum((mids * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((mids * b.size).astype(int), b.size - 1)]
    return float(np.sum(widths * np.abs(qa - qb)))


def sample_from_density(d: DensityTrajectory, row: int, n_draws: int,
                        seed: int) -> np.ndarray:
    """Inverse-CDF draws from one density row (linear CDF interpolation)."""
    x = d.grid.nodes
    m = d.values[row]
    cdf = np.concatenate(([0.0], np.cumsum(m) * d.grid.dx))
    cdf /= cdf[-1]
    xe = np.concatenate(([x[0] - 0.5 * d.grid.dx], x + 0.5 * d.grid.dx))
    gen = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0]))
    u = gen.uniform(size=n_draws)
    return np.interp(u, cdf, xe)


@dataclass
class ConvergenceReport:
    n_values: list[int]
    w1_errors: list[float]
    fitted_exponent: float
    exponent_stderr: float
    deterministic_regime: bool = False

    def __post_init__(self):
        if len(self.n_values) != len(self.w1_errors) or len(self.n_values) < 3:
            raise ValueError("need matching lists of length >= 3")


def convergence_study(model: ModelSpec, feedback, n_values: Sequence[int],
                      T: float, dt: float, replicas: int, seed: int,
                      limit_density: DensityTrajectory,
                      reference_draws: int = 100_000) -> ConvergenceReport:
    """Empirical-measure convergence rate toward the mean-field limit.

    For each population size, the n-particle system is run to time T and
    its empirical measure compared (W1) to a large inverse-CDF reference
    sample of the limiting FPK density; the log-log slope over n is fitted
    by least squares.  Initial particle positions are drawn from the
    limit's initial row.
    """
    n_values = sorted(int(n) for n in n_values)
    if len(n_values) < 3 or max(n_values) < 10 * min(n_values):
        raise ValueError("need >= 3 population sizes spanning a decade")
    n_steps = int(round(T / dt))
    row_T = int(round(T / limit_density.times.dt))
    reference = sample_from_density(limit_density, row_T, reference_draws,
                                    seed ^ 0x9E3779B97F4A7C15)
    sig_probe = np.asarray(model.diffusion(0.0, limit_density.grid.nodes),
                           dtype=float)
    deterministic = model.epsilon == 0.0 or bool(np.all(sig_probe == 0.0))

    errors = []
    for idx, n in enumerate(n_values):
        w1s = []
        for r in range(replicas):
            init_seed = seed + 1_000_003 * (idx * replicas + r)
            init = sample_from_density(limit_density, 0, n, init_seed)
            ens = ParticleEnsemble(n=n, states=init, rng_seed=init_seed + 7)
            ens = simulate(ens, model, feedback, dt, n_steps)
            w1s.append(wasserstein1(ens.states, reference))
        errors.append(float(np.mean(w1s)))

    logn = np.log(np.asarray(n_values, dtype=float))
    logw = np.log(np.asarray(errors))
    design = np.vstack([logn, np.ones_like(logn)]).T
    coef, residuals, *_ = np.linalg.lstsq(design, logw, rcond=None)
    slope = float(coef[0])
    dof = len(n_values) - 2
    if dof > 0 and residuals.size:
        s2 = float(residuals[0]) / dof
        cov = s2 * np.linalg.inv(design.T @ design)
        stderr = float(np.sqrt(cov[0, 0]))
    else:
        stderr = float("nan")
    return ConvergenceReport(n_values=list(n_values), w1_errors=errors,
                             fitted_exponent=slope, exponent_stderr=stderr,
                             deterministic_regime=deterministic)


def feedback_from_trajectory(v) -> Callable:
    """Wrap a solved ValueTrajectory's control field as a feedback (t, x) -> u."""
    times = v.times.times
    x = v.grid.nodes
    ctrl = v.control

    def feedback(t: float, states: np.ndarray) -> np.ndarray:
        s = min(int(round(t / v.times.dt)), v.times.nt - 1)
        return np.interp(states, x, ctrl[s])

    return feedback


def estimate_risk_sensitive_cost(model: ModelSpec, feedback, x0: float,
                                 mean_field: DensityTrajectory, paths: int,
                                 seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of delta * log E exp((g + int c dt)/delta).

    The mean field is frozen (exogenous): coupling features at each step
    come from the given density trajectory, not from the simulated paths.
    Returns (estimate, stderr), stderr by the delta method on the
    exponentials.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    t_grid = mean_field.times
    x_nodes = mean_field.grid.nodes
    dx = mean_field.grid.dx
    dt = t_grid.dt
    states = np.full(paths, float(x0))
    accum = np.zeros(paths)
    for s in range(t_grid.nt - 1):
        tv = t_grid.times[s]
        row = mean_field.values[s]
        mean = dx * float(np.dot(x_nodes, row))
        coupling = CouplingFeatures(mean=mean,
                                    density_at_x=np.interp(states, x_nodes, row))
        u = feedback(tv, states) if callable(feedback) else feedback
        c = np.broadcast_to(np.asarray(
            model.running_cost(tv, states, u, coupling), dtype=float), states.shape)
        f = np.broadcast_to(np.asarray(
            model.drift(tv, states, u, coupling), dtype=float), states.shape)
        sig = np.broadcast_to(np.asarray(model.diffusion(tv, states), dtype=float),
                              states.shape)
        accum = accum + c * dt
        xi = _step_normals(seed, s, paths)
        states = states + f * dt + np.sqrt(model.epsilon * dt) * sig * xi
        if not np.all(np.isfinite(states)) or not np.all(np.isfinite(accum)):
            raise SimulationFault(f"non-finite accumulation at step {s}")
    accum = accum + np.asarray(model.terminal_cost(states), dtype=float)

    s_vals = accum / model.delta
    log_mean = logsumexp(s_vals) - np.log(paths)
    estimate = float(model.delta * log_mean)
    # delta method: var(delta * log mean(Y)) ~ delta^2 var(Y) / (P mean(Y)^2)
    y = np.exp(s_vals - s_vals.max())
    stderr = float(model.delta * y.std(ddof=1) / (np.sqrt(paths) * y.mean())) \
        if paths > 1 else float("nan")
    return estimate, stderr


def write_ensemble_csv(path, e: ParticleEnsemble) -> None:
    """Emit snapshot columns t,j,x."""
    with open(path, "w") as fh:
        fh.write("t,j,x\n")
        for j, xv in enumerate(e.states):
            fh.write(f"{e.time:.17g},{j},{xv:.17g}\n")


def write_study_csv(path, rep: ConvergenceReport) -> None:
    """Emit columns n,w1 plus the fitted exponent as a trailing comment row."""
    with open(path, "w") as fh:
        fh.write("n,w1\n")
        for n, w in zip(rep.n_values, rep.w1_errors):
            fh.write(f"{n},{w:.17g}\n")
