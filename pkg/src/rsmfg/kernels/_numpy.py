"""Pure-numpy implementations of the per-step grid kernels.

Used when the compiled extension is unavailable or when the environment
variable RSMFG_FORCE_NUMPY is set.  Semantics must stay bit-for-bit
compatible with kernels/_core.pyx; the parity test compares both.
"""

import numpy as np


def upwind_gradients(v: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward one-sided differences, one-sided at the edges."""
    nx = v.shape[0]
    dp = np.empty(nx)
    dm = np.empty(nx)
    dp[:-1] = (v[1:] - v[:-1]) / dx
    dm[1:] = dp[:-1]
    dp[-1] = dm[-1]   # only interior information at the right edge
    dm[0] = dp[0]     # and at the left edge
    return dp, dm


def hjb_min_hamiltonian(v, f_tab, c_tab, dx):
    """Minimize f*Dv + c over the control grid with drift-sign upwinding.

    v: value row (nx,); f_tab, c_tab: (nu, nx) drift and running cost
    tables over the control grid.  Returns (min values (nx,), argmin
    control indices (nx,)).
    """
    dp, dm = upwind_gradients(v, dx)
    adv = np.where(f_tab > 0.0, f_tab * dp[None, :], f_tab * dm[None, :])
    q = adv + c_tab
    j = np.argmin(q, axis=0)
    ham = q[j, np.arange(v.shape[0])]
    return ham, j.astype(np.int64)


def fpk_step(m, vel, diff_iface, dx, dt):
    """One conservative finite-volume step with zero flux at both ends.

    m: density row (nx,); vel: node velocities (nx,); diff_iface:
    diffusion coefficient (eps/2) sigma^2 at the nx-1 interfaces.
    Returns the updated row; mass is conserved by flux telescoping.
    """
    a = 0.5 * (vel[:-1] + vel[1:])
    f_adv = np.where(a > 0.0, a * m[:-1], a * m[1:])
    f_dif = -diff_iface * (m[1:] - m[:-1]) / dx
    flux = f_adv + f_dif
    out = m.copy()
    out[:-1] -= (dt / dx) * flux
    out[1:] += (dt / dx) * flux
    return out
