"""Structural sufficient conditions for uniqueness of the mean-field
equilibrium, plus the small-index mean-variance expansion check.

The checks evaluate second derivatives of a user-supplied Hamiltonian
H(x, p, z) numerically (central differences with one Richardson
extrapolation step) over a lattice of evaluation points and test
positive-definiteness of the relevant 2x2 monotonicity matrix:

* risk-neutral: [[Hpp, Hpz/2], [Hpz/2, -Hz/z]] must be positive definite;
* risk-sensitive: Hpp > 0, Hz < 0, and
  (-Hz/z) * Hpp > (Hpz - (eps*sigma^2/(2*delta)) * p/z)^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "HamiltonianSpec",
    "MonotonicityReport",
    "check_uniqueness_risk_neutral",
    "check_uniqueness_risk_sensitive",
    "mean_variance_expansion_check",
    "write_monotonicity_csv",
]


@dataclass(frozen=True)
class HamiltonianSpec:
    """Hamiltonian H(x, p, z) with the model constants the risk-sensitive
    cross term needs; fd_step is relative to max(1, |coordinate|)."""

    hamiltonian: Callable[[float, float, float], float]
    epsilon: float = 1.0
    delta: float = 1.0
    sigma: float = 1.0
    # relative first-difference step; second differences use sqrt(fd_step),
    # which balances truncation against subtractive cancellation
    fd_step: float = 1e-5


@dataclass
class PointResult:
    x: float
    p: float
    z: float
    a11: float
    a12: float
    a22: float
    det: float
    passed: bool


@dataclass
class MonotonicityReport:
    mode: str
    points: list[PointResult] = field(default_factory=list)
    all_passed: bool = True
    worst_det: float = np.inf

    def record(self, r: PointResult) -> None:
        self.points.append(r)
        self.all_passed = self.all_passed and r.passed
        self.worst_det = min(self.worst_det, r.det)


def _second_partial(f, x, p, z, i, j, h_rel):
    """Richardson-extrapolated central second derivative of f in
    coordinates i, j of (x, p, z)."""
    base = np.array([x, p, z], dtype=float)
    h2 = np.sqrt(h_rel)
    hi = h2 * max(1.0, abs(base[i]))
    hj = h2 * max(1.0, abs(base[j]))

    def d2(hi_, hj_):
        if i == j:
            e = np.zeros(3); e[i] = hi_
            return (f(*(base + e)) - 2.0 * f(*base) + f(*(base - e))) / hi_**2
        ei = np.zeros(3); ei[i] = hi_
        ej = np.zeros(3); ej[j] = hj_
        return (f(*(base + ei + ej)) - f(*(base + ei - ej))
                - f(*(base - ei + ej)) + f(*(base - ei - ej))) / (4 * hi_ * hj_)

    coarse = d2(hi, hj)
    fine = d2(hi / 2, hj / 2)
    return (4.0 * fine - coarse) / 3.0


def _first_partial(f, x, p, z, i, h_rel):
    base = np.array([x, p, z], dtype=float)
    h = h_rel * max(1.0, abs(base[i]))
    e = np.zeros(3); e[i] = h
    coarse = (f(*(base + e)) - f(*(base - e))) / (2 * h)
    e2 = e / 2
    fine = (f(*(base + e2)) - f(*(base - e2))) / h
    return (4.0 * fine - coarse) / 3.0


def _pd_threshold(a11, a22):
    return 1e-10 * max(1.0, abs(a11), abs(a22))


def check_uniqueness_risk_neutral(spec: HamiltonianSpec,
                                  x_values: Sequence[float],
                                  p_values: Sequence[float],
                                  z_values: Sequence[float]) -> MonotonicityReport:
    """Positive definiteness of [[Hpp, Hpz/2], [Hpz/2, -Hz/z]] on a lattice."""
    rep = MonotonicityReport(mode="risk-neutral")
    f = spec.hamiltonian
    for z in z_values:
        if z <= 0:
            raise ValueError("density argument z must be > 0")
    for x in x_values:
        for p in p_values:
            for z in z_values:
                hpp = _second_partial(f, x, p, z, 1, 1, spec.fd_step)
                hpz = _second_partial(f, x, p, z, 1, 2, spec.fd_step)
                hz = _first_partial(f, x, p, z, 2, spec.fd_step)
                a11, a12, a22 = hpp, 0.5 * hpz, -hz / z
                det = a11 * a22 - a12 * a12
                thr = _pd_threshold(a11, a22)
                ok = a11 > thr and det > thr * max(1.0, abs(a22))
                rep.record(PointResult(x, p, z, a11, a12, a22, det, ok))
    return rep


def check_uniqueness_risk_sensitive(spec: HamiltonianSpec,
                                    x_values: Sequence[float],
                                    p_values: Sequence[float],
                                    z_values: Sequence[float]
                                    ) -> MonotonicityReport:
    """Risk-sensitive sufficient condition: Hpp > 0, Hz < 0, and the gap
    inequality with the noise-induced cross term
    (Hpz - eps*sigma^2/(2*delta) * p/z)^2 < (-Hz/z) * Hpp.
    The equivalent 2x2 determinant is recorded alongside each point.
    """
    rep = MonotonicityReport(mode="risk-sensitive")
    f = spec.hamiltonian
    cross_coef = spec.epsilon * spec.sigma**2 / (2.0 * spec.delta)
    for z in z_values:
        if z <= 0:
            raise ValueError("density argument z must be > 0")
    for x in x_values:
        for p in p_values:
            for z in z_values:
                hpp = _second_partial(f, x, p, z, 1, 1, spec.fd_step)
                hpz = _second_partial(f, x, p, z, 1, 2, spec.fd_step)
                hz = _first_partial(f, x, p, z, 2, spec.fd_step)
                a12 = 0.5 * (hpz - cross_coef * p / z)
                a22 = -hz / z
                det = hpp * a22 - (2 * a12) ** 2 / 4.0
                thr = _pd_threshold(hpp, a22)
                ok = (hpp > thr and hz < -thr
                      and a22 * hpp - (hpz - cross_coef * p / z) ** 2
                      > thr * max(1.0, abs(a22)))
                rep.record(PointResult(x, p, z, hpp, a12, a22, det, ok))
    return rep


def mean_variance_expansion_check(cost_samples: Sequence[float],
                                  delta: float) -> tuple[float, float, float]:
    """Compare the exact risk-sensitive functional on a finite sample with
    its small-1/delta expansion mean + var/(2*delta).

    Returns (exact, expansion, gap).  The exact value uses logsumexp for
    stability.
    """
    c = np.asarray(cost_samples, dtype=float)
    if c.size < 2:
        raise ValueError("need at least two samples")
    exact = float(delta * (logsumexp(c / delta) - np.log(c.size)))
    expansion = float(c.mean() + c.var(ddof=0) / (2.0 * delta))
    return exact, expansion, abs(exact - expansion)


def write_monotonicity_csv(path, rep: MonotonicityReport) -> None:
    with open(path, "w") as fh:
        fh.write("x,p,z,a11,a12,a22,det,pass\n")
        for r in rep.points:
            fh.write(f"{r.x:.17g},{r.p:.17g},{r.z:.17g},{r.a11:.17g},"
                     f"{r.a12:.17g},{r.a22:.17g},{r.det:.17g},"
                     f"{int(r.passed)}\n")
