"""Vectors, sparse matrices, linear operators and spectral estimates.

Dense vectors are 1-D float64 numpy arrays.  Sparse matrices are scipy CSR
matrices kept in canonical form (sorted indices, no duplicates).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import DimensionError, NonFiniteError

__all__ = [
    "LinearOperator",
    "SpectralInterval",
    "as_vector",
    "as_sparse",
    "apply",
    "power_iteration_extremes",
    "svd_small",
    "lipschitz_square_loss",
    "read_matrix",
    "write_matrix",
    "read_vector",
    "write_vector",
]


def as_vector(x, name="x") -> np.ndarray:
    """Return `x` as a finite 1-D float64 array (copy only if needed)."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return v


def as_sparse(M) -> sp.csr_matrix:
    """Canonical CSR copy of a dense or sparse matrix."""
    if sp.issparse(M):
        out = sp.csr_matrix(M, dtype=np.float64, copy=True)
    else:
        arr = np.asarray(M, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"matrix must be 2-D, got shape {arr.shape}")
        out = sp.csr_matrix(arr)
    out.sum_duplicates()
    out.sort_indices()
    out.eliminate_zeros()
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError("matrix contains NaN or Inf")
    return out


class LinearOperator:
    """A linear map R^cols -> R^rows with an adjoint.

    Parameters
    ----------
    shape : (int, int)
        ``(rows, cols)``.
    matvec, rmatvec : callable
        Forward and transpose application on 1-D arrays.
    matrix : scipy.sparse matrix, optional
        Explicit backing; when present the kernels can use it directly.
    """

    def __init__(
        self,
        shape: tuple[int, int],
        matvec: Callable[[np.ndarray], np.ndarray],
        rmatvec: Callable[[np.ndarray], np.ndarray],
        matrix: sp.csr_matrix | None = None,
        name: str = "",
        is_identity: bool = False,
    ):
        rows, cols = (int(s) for s in shape)
        if rows < 0 or cols < 0:
            raise DimensionError(f"invalid shape {shape}")
        self.shape = (rows, cols)
        self._matvec = matvec
        self._rmatvec = rmatvec
        self.matrix = matrix
        self._matrix_t = None
        self.name = name
        self.is_identity = is_identity

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def __repr__(self):
        kind = "explicit" if self.matrix is not None else "implicit"
        label = f" {self.name}" if self.name else ""
        return f"<LinearOperator{label} {self.rows}x{self.cols} {kind}>"

    @classmethod
    def from_matrix(cls, M, name="") -> "LinearOperator":
        S = as_sparse(M)
        op = cls(S.shape, None, None, matrix=S, name=name)
        op._matrix_t = S.T.tocsr()
        op._matrix_t.sort_indices()
        op._matvec = lambda x: S @ x
        op._rmatvec = lambda z: op._matrix_t @ z
        return op

    @classmethod
    def identity(cls, d: int) -> "LinearOperator":
        op = cls.from_matrix(sp.identity(d, format="csr"), name="identity")
        op.is_identity = True
        return op

    @classmethod
    def zeros(cls, m: int, d: int) -> "LinearOperator":
        return cls.from_matrix(sp.csr_matrix((m, d)), name="zero")

    @property
    def matrix_t(self) -> sp.csr_matrix | None:
        """CSR storage of the transpose, if explicit."""
        if self.matrix is None:
            return None
        if self._matrix_t is None:
            self._matrix_t = self.matrix.T.tocsr()
            self._matrix_t.sort_indices()
        return self._matrix_t

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.cols:
            raise DimensionError(
                f"operator has {self.cols} columns, vector has shape {x.shape}"
            )
        return np.asarray(self._matvec(x), dtype=np.float64).reshape(self.rows)

    def rapply(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1 or z.shape[0] != self.rows:
            raise DimensionError(
                f"operator has {self.rows} rows, vector has shape {z.shape}"
            )
        return np.asarray(self._rmatvec(z), dtype=np.float64).reshape(self.cols)

    __call__ = apply

    @property
    def T(self) -> "LinearOperator":
        op = LinearOperator(
            (self.cols, self.rows),
            self._rmatvec,
            self._matvec,
            matrix=self.matrix_t,
            name=f"{self.name}^T" if self.name else "",
            is_identity=self.is_identity,
        )
        op._matrix_t = self.matrix
        return op

    def gram(self) -> "LinearOperator":
        """The rows x rows operator ``B B^T``."""
        if self.matrix is not None:
            return LinearOperator.from_matrix(self.matrix @ self.matrix_t)
        return LinearOperator(
            (self.rows, self.rows),
            lambda z: self.apply(self.rapply(z)),
            lambda z: self.apply(self.rapply(z)),
        )

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix.toarray()
        return np.column_stack([self.apply(e) for e in np.eye(self.cols)]).reshape(
            self.rows, self.cols
        )

    def frobenius_norm(self) -> float:
        if self.matrix is not None:
            return float(np.sqrt(np.sum(self.matrix.data**2)))
        return float(np.linalg.norm(self.to_dense()))


def apply(op: LinearOperator, x) -> np.ndarray:
    """Return ``op @ x``; raises DimensionError on size mismatch."""
    return op.apply(x)


@dataclass(frozen=True)
class SpectralInterval:
    """Extreme eigenvalue estimates of a symmetric PSD operator."""

    lambda_max: float
    lambda_min: float
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        if self.lambda_max < 0 or self.lambda_min < 0:
            raise ValueError("eigenvalue estimates must be nonnegative")
        if self.lambda_min > self.lambda_max:
            raise ValueError("lambda_min exceeds lambda_max")


def _power_top(matvec, n, tol, max_iter, rng):
    """Largest eigenvalue of a symmetric PSD map by power iteration."""
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    rho = 0.0
    for k in range(1, max_iter + 1):
        y = matvec(x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, True, k
        rho_new = float(x @ y)
        x = y / ny
        if abs(rho_new - rho) <= tol * max(abs(rho_new), np.finfo(float).tiny):
            # residual check guards against a stalled Rayleigh quotient
            r = np.linalg.norm(matvec(x) - rho_new * x)
            if r <= np.sqrt(tol) * max(rho_new, 1e-300) or r == 0.0:
                return rho_new, True, k
        rho = rho_new
    return rho, False, max_iter


def power_iteration_extremes(
    gram: LinearOperator, tol: float = 1e-10, max_iter: int = 10000, seed: int = 0
) -> SpectralInterval:
    """Estimate the largest and smallest eigenvalues of a PSD operator.

    The largest comes from plain power iteration; the smallest from power
    iteration on ``lambda_max * I - gram``.  Non-convergence within
    `max_iter` is reported through ``converged=False`` rather than raised.
    """
    if gram.rows != gram.cols:
        raise DimensionError(f"gram operator must be square, got {gram.shape}")
    n = gram.rows
    if n == 0:
        return SpectralInterval(0.0, 0.0)
    rng = np.random.default_rng(seed)
    lmax, ok1, it1 = _power_top(gram.apply, n, tol, max_iter, rng)
    lmax = max(lmax, 0.0)
    if lmax == 0.0:
        return SpectralInterval(0.0, 0.0, ok1, it1)
    shifted, ok2, it2 = _power_top(
        lambda z: lmax * z - gram.apply(z), n, tol, max_iter, rng
    )
    lmin = min(max(lmax - shifted, 0.0), lmax)
    # absolute floor: the shifted estimate carries error ~ tol * lambda_max
    if lmin <= 10 * tol * lmax:
        lmin = 0.0
    converged = ok1 and ok2
    if not converged:
        warnings.warn("power iteration did not converge", RuntimeWarning, stacklevel=2)
    return SpectralInterval(lmax, lmin, converged, it1 + it2)


def svd_small(X):
    """Thin SVD ``X = U diag(sigma) V^T`` with `sigma` non-increasing.

    Returns ``(U, sigma, V)``; note V, not V^T.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {X.shape}")
    if X.size > 10**6:
        raise DimensionError("svd_small is limited to 10^6 entries")
    if not np.all(np.isfinite(X)):
        raise NonFiniteError("matrix contains NaN or Inf")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    return U, s, Vt.T


def lipschitz_square_loss(A: LinearOperator, max_dense: int = 4 * 10**6):
    """Lipschitz constant of the gradient of ``0.5 * ||A x - y||^2``.

    Returns ``(L, exact)``.  ``L = sigma_max(A)^2`` when an SVD is
    affordable; otherwise the squared Frobenius norm, an upper bound, with
    ``exact=False``.
    """
    m, d = A.shape
    if m == 0 or d == 0:
        return 0.0, True
    if m * d <= max_dense:
        s = np.linalg.svd(A.to_dense(), compute_uv=False)
        return float(s[0] ** 2), True
    return A.frobenius_norm() ** 2, False


def read_matrix(path) -> sp.csr_matrix:
    """Read a Matrix Market coordinate file into canonical CSR."""
    M = scipy.io.mmread(str(path))
    return as_sparse(M)


def write_matrix(path, M) -> None:
    """Write a sparse or dense matrix as Matrix Market coordinate real general."""
    S = sp.coo_matrix(as_sparse(M))
    scipy.io.mmwrite(str(path), S, field="real", symmetry="general")


def read_vector(path) -> np.ndarray:
    text = Path(path).read_text()
    vals = [float(tok) for tok in text.split()]
    return as_vector(np.array(vals, dtype=np.float64), name=str(path))


def write_vector(path, x) -> None:
    x = as_vector(x)
    Path(path).write_text("".join(f"{v:.17g}\n" for v in x))
