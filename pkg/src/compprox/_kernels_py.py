"""Pure-numpy twin of the compiled Picard-Opial kernel."""
import numpy as np
import scipy.sparse as sp


def picard_csr(indptr, indices, data, tindptr, tindices, tdata, z, v,
               lam, thresh, kind, offsets, kappa, tol, max_iter):
    m = v.shape[0]
    d = z.shape[0]
    B = sp.csr_matrix((data, indices, indptr), shape=(m, d))
    Bt = sp.csr_matrix((tdata, tindices, tindptr), shape=(d, m))
    off = np.asarray(offsets)
    sizes = np.diff(off)
    om = 1.0 - kappa
    step = 0.0
    it = 0
    while it < max_iter:
        a = v + B @ (z - lam * (Bt @ v))
        if kind == 0:
            np.clip(a, -thresh, thresh, out=a)
        elif m:
            nrm = np.sqrt(np.add.reduceat(a * a, off[:-1]))
            fac = np.ones_like(nrm)
            big = nrm > thresh
            fac[big] = thresh / nrm[big]
            a *= np.repeat(fac, sizes)
        vn = kappa * v + om * a
        step = float(np.sqrt(np.sum((vn - v) ** 2)))
        v[:] = vn
        it += 1
        if step <= tol:
            return it, step, True
    return it, step, False
