"""Backward scalar Riccati solvers for linear-quadratic game instances.

The value function of the affine-quadratic best response is
v(t, x) = z(t) x^2 + eps * sigma^2 * int_t^T z(s) ds, where z solves

    dz/dt = -q(t) + Lambda(t, M(t)) - 2 a z + (b^2 - sigma^2/rho^2) z^2,
    z(T) = q_terminal,

and the feedback control is u*(t, x) = -b z(t) x - k(t) with the offset k
solving dk/dt = z k - z M(t), k(T) = 0.

Closed forms exist for constant coefficients.  With b = 1, a = 0,
q_eff = q - Lambda constant and L = 1 - sigma^2/rho^2:

    L > 0:  z(t) = -sqrt(q_eff/L) * tanh( sqrt(L q_eff)(t-T)
                                          - artanh(sqrt(L) Q / sqrt(q_eff)) )
    L < 0:  z(t) = -sqrt(q_eff/|L|) * tan( sqrt(|L| q_eff)(t-T)
                                           - arctan(sqrt(|L|) Q / sqrt(q_eff)) )

The tan branch has conjugate points (finite-time blow-up); the solver
converts those into a FiniteTimeBlowup error instead of returning infs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import TimeGrid

__all__ = [
    "LQSpec",
    "RiccatiSolution",
    "FiniteTimeBlowup",
    "solve_riccati_scalar",
    "solve_offset_ode",
    "lq_value",
    "lq_feedback",
    "closed_form_z_constant",
    "write_riccati_csv",
]

BLOWUP_THRESHOLD = 1e9


class FiniteTimeBlowup(RuntimeError):
    """Riccati solution escaped past the blow-up threshold before t = 0."""


@dataclass(frozen=True)
class LQSpec:
    """Coefficients of a scalar linear-quadratic game instance.

    q(t) is the state-cost weight, q_terminal the terminal weight, a and b
    the state/control gains of dx = (a x + b u) dt + sqrt(eps) sigma dB.
    lambda_shift(t, mean) is the mean-field shift subtracted from q;
    coupling_mean(t) supplies the population mean M(t); beta is the
    mean-coupling drift gain (drift term beta * M(t)).
    """

    q: Callable[[float], float]
    q_terminal: float
    b: float = 1.0
    a: float = 0.0
    sigma: float = 1.0
    rho_sq: float = 1.0
    epsilon: float = 1.0
    lambda_shift: Callable[[float, float], float] = lambda t, mean: 0.0
    coupling_mean: Callable[[float], float] = lambda t: 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.rho_sq <= 0:
            raise ValueError("rho_sq must be > 0")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    @property
    def curvature(self) -> float:
        """Coefficient of z^2 in the Riccati right-hand side."""
        return self.b**2 - self.sigma**2 / self.rho_sq


@dataclass(frozen=True)
class RiccatiSolution:
    times: TimeGrid
    z: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        k = np.asarray(self.k, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "k", k)
        if z.shape != (self.times.nt,) or k.shape != (self.times.nt,):
            raise ValueError("z and k must have shape (nt,)")


def _rk4_backward(rhs: Callable[[float, float], float], terminal: float,
                  times: np.ndarray) -> np.ndarray:
    """Classical RK4 from times[-1] back to times[0]; raises on blow-up."""
    nt = len(times)
    out = np.empty(nt)
    out[-1] = terminal
    y = terminal
    for s in range(nt - 1, 0, -1):
        t = times[s]
        h = times[s - 1] - times[s]  # negative
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not math.isfinite(y) or abs(y) > BLOWUP_THRESHOLD:
            raise FiniteTimeBlowup(
                f"|z| exceeded {BLOWUP_THRESHOLD:g} at t={times[s-1]:.6g}")
        out[s - 1] = y
    return out


def solve_riccati_scalar(spec: LQSpec, times: TimeGrid) -> RiccatiSolution:
    """Integrate the scalar Riccati equation backward from z(T) = q_terminal."""
    curv = spec.curvature

    def rhs(t: float, z: float) -> float:
        q_eff = spec.q(t) - spec.lambda_shift(t, spec.coupling_mean(t))
        return -q_eff - 2.0 * spec.a * z + curv * z * z

    z = _rk4_backward(rhs, float(spec.q_terminal), times.times)
    return RiccatiSolution(times=times, z=z, k=np.zeros(times.nt))


def solve_offset_ode(spec: LQSpec, z: RiccatiSolution, times: TimeGrid) -> RiccatiSolution:
    """Fill the offset k(t) solving dk/dt = z k - z M(t), k(T) = 0.

    z must be sampled on the same time grid; z values between samples are
    linearly interpolated for the RK4 half steps.
    """
    if z.times != times:
        raise ValueError("z was solved on a different time grid")
    ts = times.times
    z_of = lambda t: float(np.interp(t, ts, z.z))

    def rhs(t: float, k: float) -> float:
        return z_of(t) * k - z_of(t) * spec.coupling_mean(t)

    k = _rk4_backward(rhs, 0.0, ts)
    return RiccatiSolution(times=times, z=z.z.copy(), k=k)


def lq_value(spec: LQSpec, z: RiccatiSolution, x: float, t_index: int) -> float:
    """Value z(t) x^2 + eps sigma^2 int_t^T z(s) ds (trapezoid tail)."""
    nt = z.times.nt
    if not -nt <= t_index < nt:
        raise IndexError(f"t_index {t_index} out of range")
    t_index %= nt
    tail = float(np.trapezoid(z.z[t_index:], z.times.times[t_index:]))
    return float(z.z[t_index]) * x * x + spec.epsilon * spec.sigma**2 * tail


def lq_feedback(spec: LQSpec, z: RiccatiSolution, x: float, t_index: int,
                control_bounds: tuple[float, float] | None = None) -> float:
    """Feedback control -b z(t) x - k(t), clipped to the control bounds."""
    u = -spec.b * float(z.z[t_index]) * x - float(z.k[t_index])
    if control_bounds is not None:
        u = float(np.clip(u, *control_bounds))
    return u


def closed_form_z_constant(q_eff: float, q_terminal: float, curvature: float,
                           horizon: float, t: np.ndarray | float) -> np.ndarray:
    """Exact solution of dz/dt = -q_eff + curvature * z^2, z(T) = q_terminal.

    Hyperbolic branch for curvature > 0, trigonometric (conjugate-point)
    branch for curvature < 0, linear for curvature == 0.  Requires
    q_eff > 0.
    """
    t = np.asarray(t, dtype=float)
    if q_eff <= 0:
        raise ValueError("closed form implemented for q_eff > 0 only")
    L, Q, T = curvature, q_terminal, horizon
    if L == 0.0:
        return Q + q_eff * (T - t)
    amp = math.sqrt(q_eff / abs(L))
    rate = math.sqrt(abs(L) * q_eff)
    w = math.sqrt(abs(L)) * Q / math.sqrt(q_eff)
    if L > 0:
        if abs(w) >= 1:
            raise ValueError("terminal value outside the tanh branch")
        return -amp * np.tanh(rate * (t - T) - math.atanh(w))
    return -amp * np.tan(rate * (t - T) - math.atan(w))


def write_riccati_csv(path, sol: RiccatiSolution) -> None:
    """Emit columns t,z,k with 17 significant digits."""
    with open(path, "w") as fh:
        fh.write("t,z,k\n")
        for t, zv, kv in zip(sol.times.times, sol.z, sol.k):
            fh.write(f"{t:.17g},{zv:.17g},{kv:.17g}\n")
