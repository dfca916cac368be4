"""Configuration-driven command line front end.

Configs are flat ``key = value`` text with dotted section names
(``model.q = 1.2``).  ``scenario.name`` selects a preset whose defaults
can be overridden field by field, from the file or with ``--set``.
Unknown keys are rejected.  Every run writes ``manifest.txt`` (config
hash, resolved keys, seed, library versions, kernel backend) next to the
CSV artifacts.

Exit codes: 0 success, 1 validation or solver fault, 2 fixed point did
not converge.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (HamiltonianSpec, check_uniqueness_risk_neutral,
                       check_uniqueness_risk_sensitive, write_monotonicity_csv)
from .fpk import (MassDrift, solve_fpk, write_density_csv,
                  write_density_summary_csv)
from .hjb import CFLViolation, HJBSolveOptions, NonFiniteValue
from .kernels import BACKEND
from .mfg import detect_bvp_solvability, solve_mfg
from .model import Grid1D, ModelSpec, TimeGrid, ValueTrajectory, density_moments
from .particles import (ParticleEnsemble, SimulationFault, convergence_study,
                        estimate_risk_sensitive_cost, feedback_from_trajectory,
                        sample_from_density, simulate, step_particles,
                        wasserstein1, write_ensemble_csv, write_study_csv)
from .riccati import (FiniteTimeBlowup, LQSpec, RiccatiSolution,
                      solve_offset_ode, solve_riccati_scalar, write_riccati_csv)

__all__ = ["main", "run", "load_config", "SCHEMA", "PRESETS"]

# key -> type; the authoritative config schema
SCHEMA = {
    "scenario.name": str,
    "grid.x_min": float, "grid.x_max": float, "grid.nx": int,
    "time.T": float, "time.nt": int,
    "model.q": float, "model.Q": float, "model.delta": float,
    "model.sigma": float, "model.epsilon": float, "model.beta": float,
    "fixedpoint.theta": float, "fixedpoint.tol": float,
    "fixedpoint.max_iter": int,
    "particles.n": int, "particles.paths": int, "particles.replicas": int,
    "particles.seed": int,
    "output.dir": str,
}

_COMMON = {
    "fixedpoint.theta": 0.5, "fixedpoint.tol": 1e-6, "fixedpoint.max_iter": 50,
    "particles.n": 1000, "particles.paths": 10000, "particles.replicas": 20,
    "particles.seed": 12345, "output.dir": "out",
}

PRESETS = {
    # affine-drift LQ scenario: dx = u dt + sqrt(eps) sigma dB,
    # c = (q - M(t)) x^2 + u^2, terminal Q x^2, m0 = N(1, 1)
    "affine-lq": {
        **_COMMON,
        "grid.x_min": -19.0, "grid.x_max": 21.0, "grid.nx": 201,
        "time.T": 5.0, "time.nt": 3501,
        "model.q": 1.2, "model.Q": 0.1, "model.delta": 1e5,
        "model.sigma": 2.0, "model.epsilon": 5.0, "model.beta": 0.0,
    },
    # mean-reverting-to-the-mean scenario: dx = (beta M(t) + u) dt + ...,
    # c = q x^2 + u^2, zero terminal cost, m0 = N(1, 1)
    "mckean-vlasov": {
        **_COMMON,
        "grid.x_min": -5.0, "grid.x_max": 9.0, "grid.nx": 141,
        "time.T": 1.0, "time.nt": 201,
        "model.q": 1.0, "model.Q": 0.0, "model.delta": 8.0,
        "model.sigma": 1.0, "model.epsilon": 1.0, "model.beta": 1.0,
    },
    # coupled-oscillator preset: d theta = (K/n) sum sin(theta_i - theta) dt
    # + D dB; beta plays the role of K, sigma of D; particle-only
    "kuramoto": {
        **_COMMON,
        "grid.x_min": 0.0, "grid.x_max": 2.0 * math.pi, "grid.nx": 129,
        "time.T": 1.0, "time.nt": 401,
        "model.q": 0.0, "model.Q": 0.0, "model.delta": 1.0,
        "model.sigma": 0.2, "model.epsilon": 1.0, "model.beta": 1.0,
    },
    # Ornstein-Uhlenbeck benchmark for the empirical-measure rate study
    "ou-benchmark": {
        **_COMMON,
        "grid.x_min": -5.0, "grid.x_max": 7.0, "grid.nx": 241,
        "time.T": 1.0, "time.nt": 801,
        "model.q": 1.0, "model.Q": 0.0, "model.delta": 1.0,
        "model.sigma": 1.0, "model.epsilon": 1.0, "model.beta": 0.0,
    },
}


class ConfigError(ValueError):
    pass


def _parse_pairs(lines, source: str) -> dict:
    out = {}
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{ln}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{ln}: unknown config key {key!r}")
        try:
            out[key] = SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{ln}: bad value for {key}: {exc}") from exc
    return out


def load_config(config_path: str | None, overrides: list[str] | None = None,
                preset: str | None = None) -> dict:
    """Resolve preset defaults, then file entries, then --set overrides."""
    file_cfg = {}
    if config_path is not None:
        text = Path(config_path).read_text()
        file_cfg = _parse_pairs(text.splitlines(), str(config_path))
    name = preset or file_cfg.get("scenario.name")
    if name is None:
        raise ConfigError("missing required field scenario.name "
                          "(or pass --preset)")
    if name not in PRESETS:
        raise ConfigError(f"unknown scenario.name {name!r}; "
                          f"choose from {sorted(PRESETS)}")
    cfg = {"scenario.name": name, **PRESETS[name]}
    cfg.update(file_cfg)
    cfg["scenario.name"] = name
    if overrides:
        cfg.update(_parse_pairs(overrides, "--set"))
    return cfg


def _grids(cfg) -> tuple[Grid1D, TimeGrid]:
    return (Grid1D(cfg["grid.x_min"], cfg["grid.x_max"], cfg["grid.nx"]),
            TimeGrid(cfg["time.T"], cfg["time.nt"]))


def _gaussian_m0(mean=1.0, var=1.0):
    return lambda x: np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * np.pi * var)


def build_model(cfg) -> ModelSpec:
    name = cfg["scenario.name"]
    q, Q = cfg["model.q"], cfg["model.Q"]
    sigma, beta = cfg["model.sigma"], cfg["model.beta"]
    if name == "affine-lq":
        return ModelSpec(
            drift=lambda t, x, u, c: u,
            diffusion=lambda t, x: sigma * np.ones_like(np.asarray(x, float)),
            running_cost=lambda t, x, u, c: (q - c.mean) * x**2 + u**2,
            terminal_cost=lambda x: Q * np.asarray(x, float) ** 2,
            delta=cfg["model.delta"], epsilon=cfg["model.epsilon"],
            control_bounds=(-25.0, 25.0), initial_density=_gaussian_m0())
    if name == "mckean-vlasov":
        return ModelSpec(
            drift=lambda t, x, u, c: beta * c.mean + u,
            diffusion=lambda t, x: sigma * np.ones_like(np.asarray(x, float)),
            running_cost=lambda t, x, u, c: q * x**2 + u**2,
            terminal_cost=lambda x: Q * np.asarray(x, float) ** 2,
            delta=cfg["model.delta"], epsilon=cfg["model.epsilon"],
            control_bounds=(-6.0, 6.0), initial_density=_gaussian_m0())
    if name == "kuramoto":
        # coupling (K/n) sum_i sin(x_i - x) = K (sin_mean cos x - cos_mean sin x)
        def kuramoto_drift(t, x, u, c):
            sin_mean = getattr(c, "sin_mean", 0.0)
            cos_mean = getattr(c, "cos_mean", 1.0)
            return beta * (sin_mean * np.cos(x) - cos_mean * np.sin(x)) + u
        width = 2.0 * math.pi
        return ModelSpec(
            drift=kuramoto_drift,
            diffusion=lambda t, x: sigma * np.ones_like(np.asarray(x, float)),
            running_cost=lambda t, x, u, c: u**2,
            terminal_cost=lambda x: np.zeros_like(np.asarray(x, float)),
            delta=cfg["model.delta"], epsilon=cfg["model.epsilon"],
            control_bounds=(-1.0, 1.0),
            initial_density=lambda x: np.full_like(np.asarray(x, float),
                                                   1.0 / width))
    if name == "ou-benchmark":
        return ModelSpec(
            drift=lambda t, x, u, c: -q * x + u,
            diffusion=lambda t, x: sigma * np.ones_like(np.asarray(x, float)),
            running_cost=lambda t, x, u, c: x**2 + u**2,
            terminal_cost=lambda x: np.zeros_like(np.asarray(x, float)),
            delta=cfg["model.delta"], epsilon=cfg["model.epsilon"],
            control_bounds=(-5.0, 5.0), initial_density=_gaussian_m0())
    raise ConfigError(f"no model builder for scenario {name!r}")


def build_lq_spec(cfg) -> LQSpec:
    """Riccati coefficients matching the scenario's frozen-mean LQ reading."""
    name = cfg["scenario.name"]
    eps, delta = cfg["model.epsilon"], cfg["model.delta"]
    rho_sq = delta / (2.0 * eps) if eps > 0 else np.inf
    if name == "affine-lq":
        return LQSpec(q=lambda t: cfg["model.q"], q_terminal=cfg["model.Q"],
                      sigma=cfg["model.sigma"], rho_sq=rho_sq, epsilon=eps,
                      lambda_shift=lambda t, mean: mean,
                      coupling_mean=lambda t: 1.0)
    return LQSpec(q=lambda t: cfg["model.q"], q_terminal=cfg["model.Q"],
                  sigma=cfg["model.sigma"], rho_sq=rho_sq, epsilon=eps,
                  coupling_mean=lambda t: 1.0, beta=cfg["model.beta"])


def _config_hash(cfg) -> str:
    body = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(body.encode()).hexdigest()


def _write_manifest(out_dir: Path, cfg, extra: dict | None = None) -> None:
    lines = [f"config_hash={_config_hash(cfg)}",
             f"seed={cfg['particles.seed']}",
             f"rsmfg_version={__version__}",
             f"python_version={sys.version.split()[0]}",
             f"numpy_version={np.__version__}",
             f"scipy_version={scipy.__version__}",
             f"kernel_backend={BACKEND}"]
    if cfg["scenario.name"] == "mckean-vlasov":
        lines.append("note=horizon T is a scenario choice (default 1.0), "
                     "overridable via time.T")
    lines += [f"{k}={cfg[k]}" for k in sorted(cfg)]
    if extra:
        lines += [f"{k}={v}" for k, v in extra.items()]
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _downsample_rows(nt: int, max_rows: int = 101) -> np.ndarray:
    if nt <= max_rows:
        return np.arange(nt)
    return np.unique(np.linspace(0, nt - 1, max_rows).astype(int))


def _write_value_downsampled(path, v: ValueTrajectory, rows) -> None:
    with open(path, "w") as fh:
        fh.write("t,x,v,u\n")
        for s in rows:
            tv = v.times.times[s]
            for i, xv in enumerate(v.grid.nodes):
                fh.write(f"{tv:.17g},{xv:.17g},"
                         f"{v.values[s, i]:.17g},{v.control[s, i]:.17g}\n")


def _write_density_downsampled(path, d, rows) -> None:
    with open(path, "w") as fh:
        fh.write("t,x,m\n")
        for s in rows:
            tv = d.times.times[s]
            for i, xv in enumerate(d.grid.nodes):
                fh.write(f"{tv:.17g},{xv:.17g},{d.values[s, i]:.17g}\n")


# ---------------------------------------------------------------- commands

def _cmd_solve_mfg(cfg, out_dir: Path) -> int:
    model = build_model(cfg)
    g, t = _grids(cfg)
    v, m, report = solve_mfg(model, g, t, theta=cfg["fixedpoint.theta"],
                             tol=cfg["fixedpoint.tol"],
                             max_iter=cfg["fixedpoint.max_iter"])
    rows = _downsample_rows(t.nt)
    _write_value_downsampled(out_dir / "value.csv", v, rows)
    _write_density_downsampled(out_dir / "density.csv", m, rows)
    write_density_summary_csv(out_dir / "density_summary.csv", m)
    with open(out_dir / "history.csv", "w") as fh:
        fh.write("iteration,residual\n")
        for i, r in enumerate(report.residual_history, start=1):
            fh.write(f"{i},{r:.17g}\n")
    _write_manifest(out_dir, cfg, {"converged": report.converged,
                                   "iterations": report.iterations,
                                   "final_gap": f"{report.final_gap:.17g}"})
    if not report.converged:
        print(f"not converged after {report.iterations} iterations "
              f"(gap {report.final_gap:.3e})", file=sys.stderr)
        return 2
    print(f"converged in {report.iterations} iterations")
    return 0


def _cmd_riccati(cfg, out_dir: Path) -> int:
    spec = build_lq_spec(cfg)
    t = TimeGrid(cfg["time.T"], cfg["time.nt"])
    z = solve_riccati_scalar(spec, t)
    z = solve_offset_ode(spec, z, t)
    write_riccati_csv(out_dir / "riccati.csv", z)
    _write_manifest(out_dir, cfg, {"z0": f"{z.z[0]:.17g}",
                                   "zT": f"{z.z[-1]:.17g}"})
    print(f"z(0) = {z.z[0]:.12g}, z(T) = {z.z[-1]:.12g}")
    return 0


def _cmd_simulate(cfg, out_dir: Path) -> int:
    model = build_model(cfg)
    g, t = _grids(cfg)
    from .model import DensityTrajectory, sample_initial_density
    m0_row = sample_initial_density(model, g)
    d0 = DensityTrajectory(grid=g, times=TimeGrid(t.horizon, 2),
                           values=np.tile(m0_row, (2, 1)))
    init = sample_from_density(d0, 0, cfg["particles.n"],
                               cfg["particles.seed"])
    ens = ParticleEnsemble(n=cfg["particles.n"], states=init,
                           rng_seed=cfg["particles.seed"])
    with open(out_dir / "ensemble_summary.csv", "w") as fh:
        fh.write("t,mean,variance\n")
        fh.write(f"{ens.time:.17g},{ens.states.mean():.17g},"
                 f"{ens.states.var():.17g}\n")
        for _ in range(t.nt - 1):
            ens = step_particles(ens, model, 0.0, t.dt)
            fh.write(f"{ens.time:.17g},{ens.states.mean():.17g},"
                     f"{ens.states.var():.17g}\n")
    write_ensemble_csv(out_dir / "particles.csv", ens)
    _write_manifest(out_dir, cfg, {"final_variance": f"{ens.states.var():.17g}"})
    print(f"simulated {ens.n} particles to t = {ens.time:.6g}")
    return 0


def _cmd_convergence(cfg, out_dir: Path) -> int:
    model = build_model(cfg)
    g, t = _grids(cfg)
    limit = solve_fpk(model, 0.0, g, t)
    rep = convergence_study(model, 0.0, [16, 64, 256, 1024], t.horizon, t.dt,
                            cfg["particles.replicas"], cfg["particles.seed"],
                            limit)
    write_study_csv(out_dir / "convergence.csv", rep)
    _write_manifest(out_dir, cfg,
                    {"fitted_exponent": f"{rep.fitted_exponent:.17g}",
                     "exponent_stderr": f"{rep.exponent_stderr:.17g}",
                     "deterministic_regime": rep.deterministic_regime})
    print(f"fitted exponent {rep.fitted_exponent:.4f} "
          f"(stderr {rep.exponent_stderr:.4f})")
    return 0


def _cmd_estimate_cost(cfg, out_dir: Path) -> int:
    model = build_model(cfg)
    g, t = _grids(cfg)
    spec = build_lq_spec(cfg)
    z = solve_riccati_scalar(spec, t)
    z = solve_offset_ode(spec, z, t)

    def feedback(tv, states):
        s = min(int(round(tv / t.dt)), t.nt - 1)
        return -spec.b * z.z[s] * states - z.k[s]

    mean_field = solve_fpk(model, feedback, g, t)
    est, stderr = estimate_risk_sensitive_cost(
        model, feedback, 1.0, mean_field, cfg["particles.paths"],
        cfg["particles.seed"])
    from .riccati import lq_value
    value = lq_value(spec, z, 1.0, 0)
    with open(out_dir / "estimate.csv", "w") as fh:
        fh.write("estimate,stderr,riccati_value\n")
        fh.write(f"{est:.17g},{stderr:.17g},{value:.17g}\n")
    _write_manifest(out_dir, cfg, {"estimate": f"{est:.17g}",
                                   "stderr": f"{stderr:.17g}"})
    print(f"estimate {est:.6g} +/- {stderr:.3g}; closed-form value {value:.6g}")
    return 0


def _cmd_check_uniqueness(cfg, out_dir: Path) -> int:
    eps, delta, sigma = (cfg["model.epsilon"], cfg["model.delta"],
                         cfg["model.sigma"])
    spec = HamiltonianSpec(
        hamiltonian=lambda x, p, z: 0.5 * p * p - np.log(z),
        epsilon=eps, delta=delta, sigma=sigma)
    xs = np.linspace(-2, 2, 5)
    ps = np.linspace(-3, 3, 7)
    zs = np.linspace(0.5, 2.0, 4)
    rn = check_uniqueness_risk_neutral(spec, xs, ps, zs)
    rs = check_uniqueness_risk_sensitive(spec, xs, ps, zs)
    write_monotonicity_csv(out_dir / "uniqueness_risk_neutral.csv", rn)
    write_monotonicity_csv(out_dir / "uniqueness_risk_sensitive.csv", rs)
    _write_manifest(out_dir, cfg, {"risk_neutral_all_passed": rn.all_passed,
                                   "risk_sensitive_all_passed": rs.all_passed})
    print(f"risk-neutral: {'pass' if rn.all_passed else 'mixed'}; "
          f"risk-sensitive: {'pass' if rs.all_passed else 'mixed'}")
    return 0


def _cmd_bvp_demo(cfg, out_dir: Path) -> int:
    horizons = np.linspace(0.1, 2.0 * math.pi, 64)
    horizons = np.sort(np.append(horizons, [7 * math.pi / 4, 3 * math.pi / 4]))
    with open(out_dir / "bvp.csv", "w") as fh:
        fh.write("T,m0,classification\n")
        for m0 in (1.0, 0.0):
            for T in horizons:
                cls = detect_bvp_solvability(m0, float(T))
                fh.write(f"{T:.17g},{m0:.17g},{cls.value}\n")
    _write_manifest(out_dir, cfg, {})
    print(f"classified {2 * horizons.size} (m0, T) boundary value problems")
    return 0


_FIG_SCENARIO = {"fig1": "affine-lq", "fig2": "affine-lq", "fig3": "affine-lq",
                 "fig4": "affine-lq", "fig5": "mckean-vlasov",
                 "fig6": "mckean-vlasov", "fig7": "ou-benchmark"}


def _cmd_reproduce(fig: str, cfg, out_dir: Path) -> int:
    """Canned scenario runs behind the figure labels:

    fig1/fig2/fig3 value, density and control fields of the affine
    scenario equilibrium; fig4 its Riccati trace (t,z); fig5 the
    mean-reverting scenario's Riccati trace; fig6 that scenario's density
    evolution; fig7 the empirical-measure rate study.
    """
    if fig in ("fig1", "fig2", "fig3", "fig6"):
        rc = _cmd_solve_mfg(cfg, out_dir)
        if fig == "fig2" and rc == 0:
            means = np.loadtxt(out_dir / "density_summary.csv", delimiter=",",
                               skiprows=1, usecols=1)
            print(f"mean: {means[0]:.4f} -> {means[-1]:.4f}")
        return rc
    if fig in ("fig4", "fig5"):
        spec = build_lq_spec(cfg)
        t = TimeGrid(cfg["time.T"], cfg["time.nt"])
        z = solve_riccati_scalar(spec, t)
        with open(out_dir / f"{fig}.csv", "w") as fh:
            fh.write("t,z\n")
            for tv, zv in zip(t.times, z.z):
                fh.write(f"{tv:.17g},{zv:.17g}\n")
        _write_manifest(out_dir, cfg, {"zT": f"{z.z[-1]:.17g}"})
        print(f"wrote {fig}.csv; z(T) = {z.z[-1]:.6g}")
        return 0
    if fig == "fig7":
        return _cmd_convergence(cfg, out_dir)
    raise ConfigError(f"unknown figure {fig!r}; choose fig1..fig7")


_COMMANDS = {
    "solve-mfg": _cmd_solve_mfg,
    "riccati": _cmd_riccati,
    "simulate": _cmd_simulate,
    "convergence": _cmd_convergence,
    "estimate-cost": _cmd_estimate_cost,
    "check-uniqueness": _cmd_check_uniqueness,
    "bvp-demo": _cmd_bvp_demo,
}


def run(subcommand: str, config_path: str | None, out_dir: str,
        overrides: list[str] | None = None, preset: str | None = None,
        figure: str | None = None) -> int:
    if subcommand != "reproduce" and subcommand not in _COMMANDS:
        print(f"error: unknown subcommand {subcommand!r}; choose from "
              f"{sorted(_COMMANDS) + ['reproduce']}", file=sys.stderr)
        return 1
    try:
        if subcommand == "reproduce":
            if figure not in _FIG_SCENARIO:
                raise ConfigError(f"unknown figure {figure!r}; "
                                  "choose fig1..fig7")
            cfg = load_config(config_path, overrides,
                              preset or _FIG_SCENARIO[figure])
        else:
            cfg = load_config(config_path, overrides, preset)
        out = Path(out_dir if out_dir is not None else cfg["output.dir"])
        out.mkdir(parents=True, exist_ok=True)
        if subcommand == "reproduce":
            return _cmd_reproduce(figure, cfg, out)
        return _COMMANDS[subcommand](cfg, out)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except CFLViolation as exc:
        print(f"error: CFL violation: {exc}", file=sys.stderr)
        return 1
    except (MassDrift, FiniteTimeBlowup, NonFiniteValue,
            SimulationFault) as exc:
        print(f"error: solver fault: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rsmfg",
        description="Risk-sensitive mean-field game solver toolkit")
    parser.add_argument("subcommand",
                        help="solve-mfg | riccati | simulate | convergence | "
                             "estimate-cost | check-uniqueness | bvp-demo | "
                             "reproduce")
    parser.add_argument("figure", nargs="?", default=None,
                        help="figure label for 'reproduce' (fig1..fig7)")
    parser.add_argument("--config", default=None, help="path to a key=value "
                        "config file")
    parser.add_argument("--preset", default=None,
                        help=f"scenario preset: {', '.join(sorted(PRESETS))}")
    parser.add_argument("--out", default=None, help="output directory "
                        "(default: output.dir from the config)")
    parser.add_argument("--set", action="append", default=[], metavar="K=V",
                        dest="overrides", help="override one config key")
    args = parser.parse_args(argv)
    if args.subcommand != "reproduce" and args.figure is not None:
        print(f"error: unexpected positional argument {args.figure!r}",
              file=sys.stderr)
        return 1
    out_dir = args.out
    if out_dir is None:
        # fall back to output.dir once the config resolves; pass through
        try:
            cfg = load_config(args.config, args.overrides,
                              args.preset or (_FIG_SCENARIO.get(args.figure)
                                              if args.subcommand == "reproduce"
                                              else None))
            out_dir = cfg["output.dir"]
        except ConfigError as exc:
            print(f"error: config: {exc}", file=sys.stderr)
            return 1
    return run(args.subcommand, args.config, out_dir, args.overrides,
               args.preset, args.figure)


if __name__ == "__main__":
    sys.exit(main())
