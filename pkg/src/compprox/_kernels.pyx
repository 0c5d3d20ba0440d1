# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Picard-Opial loop for an explicit CSR operator B.

Iterates v <- kappa*v + (1-kappa)*(I - prox)(v + B(z - lam*B^T v)) for the
l1 (kind 0) and block-l2 (kind 1) penalties, whose prox complements are a
clip and a radial rescale.  Semantics match ``_kernels_py.picard_csr``.
"""
import numpy as np
from libc.math cimport sqrt

ctypedef long long idx_t


def picard_csr(const idx_t[::1] indptr, const idx_t[::1] indices,
               const double[::1] data,
               const idx_t[::1] tindptr, const idx_t[::1] tindices,
               const double[::1] tdata,
               const double[::1] z, double[::1] v,
               double lam, double thresh, int kind,
               const idx_t[::1] offsets,
               double kappa, double tol, long max_iter):
    cdef Py_ssize_t m = v.shape[0]
    cdef Py_ssize_t d = z.shape[0]
    cdef Py_ssize_t nblk = offsets.shape[0] - 1
    cdef double[::1] u = np.empty(d, dtype=np.float64)
    cdef double[::1] a = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t i, j, k, b, lo, hi
    cdef long it = 0
    cdef double s, nrm, fac, vn, diff, step2 = 0.0
    cdef double om = 1.0 - kappa
    cdef bint converged = False

    with nogil:
        while it < max_iter:
            # u = z - lam * B^T v
            for j in range(d):
                s = 0.0
                for k in range(tindptr[j], tindptr[j + 1]):
                    s = s + tdata[k] * v[tindices[k]]
                u[j] = z[j] - lam * s
            # a = v + B u
            for i in range(m):
                s = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    s = s + data[k] * u[indices[k]]
                a[i] = v[i] + s
            # a <- (I - prox)(a)
            if kind == 0:
                for i in range(m):
                    if a[i] > thresh:
                        a[i] = thresh
                    elif a[i] < -thresh:
                        a[i] = -thresh
            else:
                for b in range(nblk):
                    lo = offsets[b]
                    hi = offsets[b + 1]
                    s = 0.0
                    for i in range(lo, hi):
                        s = s + a[i] * a[i]
                    nrm = sqrt(s)
                    if nrm > thresh:
                        fac = thresh / nrm
                        for i in range(lo, hi):
                            a[i] = a[i] * fac
            step2 = 0.0
            for i in range(m):
                vn = kappa * v[i] + om * a[i]
                diff = vn - v[i]
                step2 = step2 + diff * diff
                v[i] = vn
            it = it + 1
            if sqrt(step2) <= tol:
                converged = True
                break
    return it, sqrt(step2), converged
