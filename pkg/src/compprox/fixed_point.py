"""Prox of ``w o B`` and Q-quadratic minimizers through fixed points.

For ``min_y 0.5 y'Qy - x'y + w(By)`` the minimizer is
``Q^{-1}(x - lam B' v)`` where v is a fixed point of

    H(v) = (I - prox_{w/lam})(v + B Q^{-1}(x - lam B' v)),

a nonexpansive map whenever ``0 < lam <= 2 / lambda_max(B Q^{-1} B')``.
Fixed points are found by Picard iteration of the kappa-averaged map
``kappa I + (1 - kappa) H``.  With Q = I this gives ``prox_{w o B}(x)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from . import kernels
from .errors import DimensionError, InadmissibleStepError
from .linalg import LinearOperator, SpectralInterval, as_vector, power_iteration_extremes
from .prox import ProxPenalty

__all__ = [
    "SpdOperator",
    "FixedPointState",
    "picard_opial",
    "build_H",
    "gram_spectrum",
    "default_lam",
    "check_lam",
    "prox_composite",
    "quad_min_composite",
    "composite_residual",
]

log = logging.getLogger(__name__)

SPECTRAL_TOL = 1e-10


class SpdOperator:
    """Symmetric positive definite Q with ``apply`` and ``solve``."""

    def __init__(self, d, apply, solve, name=""):
        self.d = int(d)
        self._apply = apply
        self._solve = solve
        self.name = name

    @classmethod
    def identity(cls, d):
        return cls(d, lambda x: np.array(x, dtype=float), lambda x: np.array(x, dtype=float), "I")

    @classmethod
    def scalar(cls, c, d):
        if c <= 0:
            raise ValueError("scalar SPD operator needs c > 0")
        return cls(d, lambda x: c * np.asarray(x), lambda x: np.asarray(x) / c, f"{c}*I")

    @classmethod
    def diagonal(cls, diag):
        diag = as_vector(diag, "diag")
        if np.any(diag <= 0):
            raise ValueError("diagonal entries must be positive")
        return cls(diag.size, lambda x: diag * x, lambda x: x / diag, "diag")

    @classmethod
    def dense(cls, Q):
        """Cholesky-backed operator; raises LinAlgError if Q is not SPD."""
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionError(f"Q must be square, got {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=1e-12, atol=1e-14 * np.abs(Q).max(initial=1.0)):
            raise ValueError("Q must be symmetric")
        cho = scipy.linalg.cho_factor(Q)
        return cls(Q.shape[0], lambda x: Q @ x, lambda x: scipy.linalg.cho_solve(cho, x), "dense")

    def apply(self, x):
        return self._apply(x)

    def solve(self, x):
        return self._solve(x)


@dataclass
class FixedPointState:
    """Result of a Picard-Opial run; ``v`` seeds warm starts."""

    v: np.ndarray
    iterations: int
    step_norm: float
    converged: bool
    lam: float | None = None


def picard_opial(
    phi: Callable[[np.ndarray], np.ndarray],
    v0,
    kappa: float = 0.2,
    tol: float = 1e-10,
    max_iter: int = 1000,
) -> FixedPointState:
    """Iterate ``v <- kappa v + (1 - kappa) phi(v)`` until a small step.

    Stops when ``||v_{n+1} - v_n|| <= tol``; then ``||phi(v) - v||`` is at
    most ``tol / (1 - kappa)``.  ``kappa = 0`` is plain Picard iteration,
    which need not converge for a merely nonexpansive map; hitting
    `max_iter` returns ``converged=False`` instead of raising.
    """
    if not 0.0 <= kappa < 1.0:
        raise ValueError("kappa must lie in [0, 1)")
    v = np.array(v0, dtype=np.float64, copy=True)
    step = np.inf
    for n in range(1, max_iter + 1):
        v_new = kappa * v + (1.0 - kappa) * phi(v)
        step = float(np.linalg.norm(v_new - v))
        v = v_new
        if step <= tol:
            return FixedPointState(v, n, step, True)
    return FixedPointState(v, max_iter, step, False)


def _q_gram(B: LinearOperator, Q: SpdOperator | None) -> LinearOperator:
    if Q is None:
        return B.gram()
    return LinearOperator(
        (B.rows, B.rows),
        lambda z: B.apply(Q.solve(B.rapply(z))),
        lambda z: B.apply(Q.solve(B.rapply(z))),
    )


def gram_spectrum(B: LinearOperator, Q: SpdOperator | None = None, seed: int = 0) -> SpectralInterval:
    """Extreme eigenvalues of ``B Q^{-1} B'`` (``B B'`` when Q is None)."""
    if B.rows == 0:
        return SpectralInterval(0.0, 0.0)
    if B.is_identity and Q is None:
        return SpectralInterval(1.0, 1.0)
    return power_iteration_extremes(_q_gram(B, Q), tol=SPECTRAL_TOL, max_iter=20000, seed=seed)


def default_lam(spec: SpectralInterval) -> float:
    """``2 / (mu_max + mu_min)``, the step minimizing max |1 - lam mu|.

    mu_max is inflated by the power-iteration tolerance so that an
    underestimate cannot push the step past the nonexpansive bound.
    """
    mu_max = spec.lambda_max * (1.0 + 10 * SPECTRAL_TOL)
    if mu_max == 0:
        return 1.0
    return 2.0 / (mu_max + spec.lambda_min)


def check_lam(lam: float, spec: SpectralInterval) -> float:
    lam = float(lam)
    if not lam > 0 or (spec.lambda_max > 0 and lam > 2.0 / spec.lambda_max):
        raise InadmissibleStepError(lam, spec.lambda_max)
    return lam


def build_H(
    penalty: ProxPenalty,
    B: LinearOperator,
    Q: SpdOperator | None,
    x,
    lam: float,
    spectrum: SpectralInterval | None = None,
):
    """The map ``v -> (I - prox_{w/lam})(A v)`` on R^m.

    ``A v = (I - lam B Q^{-1} B') v + B Q^{-1} x``.  Raises
    InadmissibleStepError when `lam` exceeds ``2 / lambda_max``.
    """
    x = as_vector(x)
    if x.size != B.cols:
        raise DimensionError(f"x has length {x.size}, B has {B.cols} columns")
    spec = spectrum if spectrum is not None else gram_spectrum(B, Q)
    lam = check_lam(lam, spec)
    solve = (lambda t: t) if Q is None else Q.solve

    def A(v):
        return v + B.apply(solve(x - lam * B.rapply(v)))

    def H(v):
        a = A(v)
        return a - penalty.prox(a, scale=1.0 / lam)

    H.A = A
    H.lam = lam
    return H


_KERNEL_KINDS = {"l1": 0, "l2": 1, "group_l2": 1}


def _kernel_args(B: LinearOperator):
    """Cached int64 CSR arrays of B and B'."""
    cached = getattr(B, "_kernel_cache", None)
    if cached is None:
        M, Mt = B.matrix, B.matrix_t
        cached = (
            np.ascontiguousarray(M.indptr, dtype=np.int64),
            np.ascontiguousarray(M.indices, dtype=np.int64),
            np.ascontiguousarray(M.data, dtype=np.float64),
            np.ascontiguousarray(Mt.indptr, dtype=np.int64),
            np.ascontiguousarray(Mt.indices, dtype=np.int64),
            np.ascontiguousarray(Mt.data, dtype=np.float64),
        )
        B._kernel_cache = cached
    return cached


def _fixed_point_csr(penalty, B, x, lam, kappa, tol, max_iter, v0, backend=None):
    kind = _KERNEL_KINDS[penalty.kind]
    if penalty.kind == "group_l2":
        offsets = np.asarray(penalty.offsets, dtype=np.int64)
        if offsets[-1] != B.rows:
            raise DimensionError(f"penalty blocks cover {offsets[-1]} entries, B has {B.rows} rows")
    else:
        offsets = np.array([0, B.rows], dtype=np.int64)
    thresh = penalty._coef(1.0) / lam
    v = np.array(v0, dtype=np.float64, copy=True)
    kern = kernels.get_kernel(backend)
    it, step, ok = kern(*_kernel_args(B), np.ascontiguousarray(x), v, float(lam), float(thresh),
                        kind, offsets, float(kappa), float(tol), int(max_iter))
    return FixedPointState(v, int(it), float(step), bool(ok))


def uses_kernel(penalty: ProxPenalty, B: LinearOperator, Q=None) -> bool:
    return Q is None and B.matrix is not None and penalty.kind in _KERNEL_KINDS and not penalty.is_zero


def prox_composite(
    penalty: ProxPenalty,
    B: LinearOperator,
    x,
    lam: float | None = None,
    kappa: float = 0.2,
    tol: float = 1e-10,
    max_iter: int = 1000,
    warm_start: FixedPointState | np.ndarray | None = None,
    spectrum: SpectralInterval | None = None,
    backend: str | None = None,
):
    """Evaluate ``prox_{w o B}(x)`` as ``x - lam B' v`` with v a fixed point.

    Parameters
    ----------
    penalty : ProxPenalty
        The simple function w on R^m.
    B : LinearOperator
        m x d.
    x : array
        Point of R^d.
    lam : float, optional
        Fixed-point step in ``(0, 2/lambda_max(B B')]``.  Defaults to
        ``2 / (lambda_max + lambda_min)``.
    warm_start : FixedPointState or array, optional
        Initial v; zero if omitted.
    backend : {"cython", "python"}, optional
        Force a kernel backend for the ``l1``/``l2``/``group_l2`` fast path.

    Returns
    -------
    u : array
        The prox.
    state : FixedPointState
        Fixed point, iteration count and convergence flag.
    """
    x = as_vector(x)
    if x.size != B.cols:
        raise DimensionError(f"x has length {x.size}, B has {B.cols} columns")
    m = B.rows
    if penalty.is_zero or m == 0:
        return x.copy(), FixedPointState(np.zeros(m), 0, 0.0, True)
    if penalty.dim is not None and penalty.dim != m:
        raise DimensionError(f"penalty acts on R^{penalty.dim}, B maps into R^{m}")
    spec = spectrum if spectrum is not None else gram_spectrum(B)
    lam = default_lam(spec) if lam is None else check_lam(lam, spec)
    if warm_start is None:
        v0 = np.zeros(m)
    else:
        v0 = warm_start.v if isinstance(warm_start, FixedPointState) else as_vector(warm_start)
        if v0.size != m:
            raise DimensionError("warm start has the wrong length")
    if uses_kernel(penalty, B):
        state = _fixed_point_csr(penalty, B, x, lam, kappa, tol, max_iter, v0, backend)
    else:
        H = build_H(penalty, B, None, x, lam, spectrum=spec)
        state = picard_opial(H, v0, kappa, tol, max_iter)
    if not state.converged:
        log.debug("prox_composite: no convergence after %d iterations (step %.3g)",
                  state.iterations, state.step_norm)
    u = x - lam * B.rapply(state.v)
    state.lam = lam
    return u, state


def quad_min_composite(
    penalty: ProxPenalty,
    B: LinearOperator,
    Q: SpdOperator,
    x,
    lam: float | None = None,
    kappa: float = 0.2,
    tol: float = 1e-10,
    max_iter: int = 1000,
    return_state: bool = False,
):
    """Minimize ``0.5 y'Qy - x'y + w(By)``.

    Returns ``Q^{-1}(x - lam B' v)`` for the fixed point v of H; with
    ``return_state=True`` also the FixedPointState.
    """
    x = as_vector(x)
    if Q.d != B.cols:
        raise DimensionError("Q and B disagree on the dimension")
    if penalty.is_zero or B.rows == 0:
        u = np.asarray(Q.solve(x), dtype=np.float64)
        state = FixedPointState(np.zeros(B.rows), 0, 0.0, True)
        return (u, state) if return_state else u
    spec = gram_spectrum(B, Q)
    lam = default_lam(spec) if lam is None else check_lam(lam, spec)
    H = build_H(penalty, B, Q, x, lam, spectrum=spec)
    state = picard_opial(H, np.zeros(B.rows), kappa, tol, max_iter)
    state.lam = lam
    u = np.asarray(Q.solve(x - lam * B.rapply(state.v)), dtype=np.float64)
    return (u, state) if return_state else u


def composite_residual(penalty: ProxPenalty, B: LinearOperator, x, u, v, lam) -> float:
    """Optimality residual of u as ``prox_{w o B}(x)`` with dual certificate v.

    With ``g = lam v`` the two conditions ``x - u = B' g`` and
    ``g in dw(Bu)`` certify optimality; the second is tested in prox form,
    ``Bu = prox_{w/lam}(Bu + v)``.  Returns the larger violation.
    """
    x, u, v = as_vector(x), as_vector(u, "u"), as_vector(v, "v")
    r1 = np.linalg.norm(x - u - lam * B.rapply(v))
    Bu = B.apply(u)
    r2 = np.linalg.norm(Bu - penalty.prox(Bu + v, scale=1.0 / lam))
    return float(max(r1, r2))
