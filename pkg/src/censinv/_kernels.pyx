# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled slice kernel; see ``_kernels_py.continuation`` for the contract."""
import numpy as np

from libc.math cimport INFINITY
from libc.stdint cimport int64_t


def continuation(const double[:, :, ::1] V, Py_ssize_t n,
                 const double[:, ::1] s, const double[::1] disc,
                 const double[:, :, ::1] base,
                 const int64_t[:, :, :, ::1] fv, const double[:, :, :, ::1] fw,
                 const double[:, :, ::1] wf,
                 const int64_t[:, :, :, ::1] sv, const double[:, :, :, ::1] sw,
                 const double[:, :, ::1] wso,
                 const int64_t[:, :, ::1] xv, const double[:, :, ::1] xw,
                 bint censored, double h, double zeta, bint sellback, double dt,
                 bint intervene, double[:, ::1] out_C, int64_t[:, ::1] out_j):
    cdef Py_ssize_t G = base.shape[0]
    cdef Py_ssize_t A = base.shape[2]
    cdef Py_ssize_t R = wf.shape[2]
    cdef Py_ssize_t m = xv.shape[2]
    cdef Py_ssize_t g, j, a, b, y, v, sl, post, bmin
    cdef double hj, val, weight, mv, cand, dsc
    cdef double[::1] cum = np.empty(A)
    cdef double[::1] best = np.empty(A)
    cdef int64_t[::1] arg = np.empty(A, dtype=np.int64)
    cdef double[::1] vx = np.empty(A)
    cdef double[:, ::1] vfull = np.empty((R, A))
    with nogil:
        for g in range(G):
            for a in range(A):
                cum[a] = 0.0
                best[a] = INFINITY
                arg[a] = n + 1
            for j in range(1, n + 1):
                sl = n - j
                dsc = disc[j]
                weight = s[g, j] * dsc
                for b in range(A):
                    val = 0.0
                    for v in range(m):
                        val = val + xw[g, j, v] * V[sl, xv[g, j, v], b]
                    vx[b] = val
                for y in range(R):
                    for b in range(A):
                        val = 0.0
                        for v in range(m):
                            val = val + fw[g, j, y, v] * V[sl, fv[g, j, y, v], b]
                        vfull[y, b] = val
                for a in range(A):
                    hj = base[g, j, a]
                    for y in range(1, R + 1):
                        if censored and y > a:
                            break
                        post = a - y
                        if post < 0:
                            post = 0
                        hj = hj + wf[g, j, y - 1] * vfull[y - 1, post]
                    if censored and a < R:
                        val = 0.0
                        for v in range(m):
                            val = val + sw[g, j, a, v] * V[sl, sv[g, j, a, v], 0]
                        hj = hj + wso[g, j, a] * val
                    hj = hj * dsc
                    cum[a] = cum[a] + dt * hj
                    if intervene:
                        bmin = 0 if sellback else a
                        mv = INFINITY
                        for b in range(bmin, A):
                            cand = vx[b] + h * (b - a) + zeta
                            if cand < mv:
                                mv = cand
                        cand = cum[a] - 0.5 * dt * hj + weight * mv
                        if cand < best[a]:
                            best[a] = cand
                            arg[a] = j
                    if j == n:
                        cand = cum[a] - 0.5 * dt * hj + weight * vx[a]
                        if cand < best[a]:
                            best[a] = cand
                            arg[a] = n + 1
            for a in range(A):
                out_C[g, a] = best[a]
                out_j[g, a] = arg[a]
