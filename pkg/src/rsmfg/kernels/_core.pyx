# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-step grid kernels.

Mirrors kernels/_numpy.py; the control-minimization sweep below is the
hot loop of the backward HJB solver (nu * nx work per time step).
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def upwind_gradients(const double[::1] v, double dx):
    cdef Py_ssize_t nx = v.shape[0]
    cdef cnp.ndarray[double, ndim=1] dp_arr = np.empty(nx)
    cdef cnp.ndarray[double, ndim=1] dm_arr = np.empty(nx)
    cdef double[::1] dp = dp_arr
    cdef double[::1] dm = dm_arr
    cdef Py_ssize_t i
    for i in range(nx - 1):
        dp[i] = (v[i + 1] - v[i]) / dx
    for i in range(1, nx):
        dm[i] = dp[i - 1]
    dp[nx - 1] = dm[nx - 1]
    dm[0] = dp[0]
    return dp_arr, dm_arr


def hjb_min_hamiltonian(const double[::1] v, const double[:, ::1] f_tab,
                        const double[:, ::1] c_tab, double dx):
    """Minimize f*Dv + c over the control grid with drift-sign upwinding."""
    cdef Py_ssize_t nu = f_tab.shape[0]
    cdef Py_ssize_t nx = f_tab.shape[1]
    cdef cnp.ndarray[double, ndim=1] ham_arr = np.empty(nx)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] arg_arr = np.empty(nx, dtype=np.int64)
    cdef double[::1] ham = ham_arr
    cdef cnp.int64_t[::1] arg = arg_arr
    cdef double[::1] dp
    cdef double[::1] dm
    dp, dm = upwind_gradients(v, dx)

    cdef Py_ssize_t i, k
    cdef double f, q, best
    cdef Py_ssize_t best_k
    for i in range(nx):
        best = 0.0
        best_k = 0
        for k in range(nu):
            f = f_tab[k, i]
            if f > 0.0:
                q = f * dp[i] + c_tab[k, i]
            else:
                q = f * dm[i] + c_tab[k, i]
            if k == 0 or q < best:
                best = q
                best_k = k
        ham[i] = best
        arg[i] = best_k
    return ham_arr, arg_arr


def fpk_step(const double[::1] m, const double[::1] vel, const double[::1] diff_iface,
             double dx, double dt):
    """One conservative finite-volume step with zero flux at both ends."""
    cdef Py_ssize_t nx = m.shape[0]
    cdef cnp.ndarray[double, ndim=1] out_arr = np.empty(nx)
    cdef double[::1] out = out_arr
    cdef double r = dt / dx
    cdef Py_ssize_t i
    cdef double a, flux, prev

    prev = 0.0
    for i in range(nx - 1):
        a = 0.5 * (vel[i] + vel[i + 1])
        if a > 0.0:
            flux = a * m[i]
        else:
            flux = a * m[i + 1]
        flux = flux - diff_iface[i] * (m[i + 1] - m[i]) / dx
        out[i] = m[i] - r * flux + r * prev
        prev = flux
    out[nx - 1] = m[nx - 1] + r * prev
    return out_arr
