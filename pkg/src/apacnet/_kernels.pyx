# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the hot activation kernels.

Mirrors ``apacnet._kernels_np`` function for function; see that module for
the array contracts.  The forward pass leaves the tanh evaluation to numpy's
vectorized implementation and fuses everything else; the backward kernels
are single-pass arithmetic in the cached activation value.
"""

import numpy as np

cimport cython

TANH = 0
RELU = 1

from apacnet._kernels_np import _act_derivs  # shared preactivation ladder


cdef inline void _ladder(int kind, double a, int up_to, double* d) noexcept nogil:
    cdef double d1, d2
    d[0] = a
    if kind == 0:
        d1 = 1.0 - a * a
        d[1] = d1
        if up_to >= 2:
            d2 = -2.0 * a * d1
            d[2] = d2
            if up_to >= 3:
                d[3] = -2.0 * (d1 * d1 + a * d2)
    else:
        d[1] = 1.0 if a > 0.0 else 0.0
        if up_to >= 2:
            d[2] = 0.0
            if up_to >= 3:
                d[3] = 0.0


def act_aug_fwd(int kind, int d_spatial, v, double[:, :, ::1] jac, double[:, ::1] lap):
    a_arr = np.tanh(v) if kind == TANH else np.maximum(v, 0.0)
    cdef Py_ssize_t K = jac.shape[0], B = jac.shape[1], N = jac.shape[2]
    out_j_arr = np.empty((K, B, N))
    out_l_arr = np.empty((B, N))
    cdef double[:, ::1] a = a_arr
    cdef double[:, :, ::1] out_j = out_j_arr
    cdef double[:, ::1] out_l = out_l_arr
    cdef Py_ssize_t bi, n, k
    cdef double d[4]
    cdef double s, jv
    with nogil:
        for bi in range(B):
            for n in range(N):
                _ladder(kind, a[bi, n], 2, d)
                s = 0.0
                for k in range(K):
                    jv = jac[k, bi, n]
                    out_j[k, bi, n] = d[1] * jv
                    if k < d_spatial:
                        s += jv * jv
                out_l[bi, n] = d[2] * s + d[1] * lap[bi, n]
    return a_arr, out_j_arr, out_l_arr


def act_bwd_val(int kind, double[:, ::1] a, double[:, ::1] g):
    cdef Py_ssize_t B = a.shape[0], N = a.shape[1]
    gv_arr = np.empty((B, N))
    cdef double[:, ::1] gv = gv_arr
    cdef Py_ssize_t bi, n
    cdef double av
    with nogil:
        if kind == 0:
            for bi in range(B):
                for n in range(N):
                    av = a[bi, n]
                    gv[bi, n] = g[bi, n] * (1.0 - av * av)
        else:
            for bi in range(B):
                for n in range(N):
                    gv[bi, n] = g[bi, n] if a[bi, n] > 0.0 else 0.0
    return gv_arr


def act_bwd_jac(int kind, double[:, ::1] a, double[:, :, ::1] jac,
                double[:, :, ::1] g, bint need_v=True, bint need_jac=True):
    cdef Py_ssize_t K = jac.shape[0], B = jac.shape[1], N = jac.shape[2]
    gv_arr = np.zeros((B, N)) if need_v else None
    gj_arr = np.empty((K, B, N)) if need_jac else None
    cdef double[:, ::1] gv
    cdef double[:, :, ::1] gj
    if need_v:
        gv = gv_arr
    if need_jac:
        gj = gj_arr
    cdef Py_ssize_t bi, n, k
    cdef double d[4]
    with nogil:
        if need_v:
            for k in range(K):
                for bi in range(B):
                    for n in range(N):
                        gv[bi, n] += g[k, bi, n] * jac[k, bi, n]
        for bi in range(B):
            for n in range(N):
                _ladder(kind, a[bi, n], 2, d)
                if need_v:
                    gv[bi, n] *= d[2]
                if need_jac:
                    for k in range(K):
                        gj[k, bi, n] = d[1] * g[k, bi, n]
    return gv_arr, gj_arr


def act_bwd_lap(int kind, int d_spatial, double[:, ::1] a, double[:, :, ::1] jac,
                double[:, ::1] lap, double[:, ::1] g, bint need_v=True,
                bint need_jac=True, bint need_lap=True):
    cdef Py_ssize_t K = jac.shape[0], B = jac.shape[1], N = jac.shape[2]
    gv_arr = np.empty((B, N)) if need_v else None
    gj_arr = np.zeros((K, B, N)) if need_jac else None
    gl_arr = np.empty((B, N)) if need_lap else None
    cdef double[:, ::1] gv
    cdef double[:, :, ::1] gj
    cdef double[:, ::1] gl
    if need_v:
        gv = gv_arr
    if need_jac:
        gj = gj_arr
    if need_lap:
        gl = gl_arr
    cdef Py_ssize_t bi, n, k
    cdef double d[4]
    cdef double s, gg
    with nogil:
        for bi in range(B):
            for n in range(N):
                _ladder(kind, a[bi, n], 3, d)
                gg = g[bi, n]
                if need_v:
                    s = 0.0
                    for k in range(d_spatial):
                        s += jac[k, bi, n] * jac[k, bi, n]
                    gv[bi, n] = gg * (d[3] * s + d[2] * lap[bi, n])
                if need_jac:
                    for k in range(d_spatial):
                        gj[k, bi, n] = 2.0 * gg * d[2] * jac[k, bi, n]
                if need_lap:
                    gl[bi, n] = gg * d[1]
    return gv_arr, gj_arr, gl_arr
