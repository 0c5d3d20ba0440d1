"""Closed-form proximity operators of simple penalties.

Every operator here computes ``argmin_y 0.5 * ||y - x||^2 + w(y)`` for a
penalty ``w``.  :func:`subgrad_residual` measures the distance from
``x - y`` to the subdifferential of ``w`` at ``y`` and certifies a
candidate output.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, InvalidGroupsError, UnsupportedPenaltyError
from .linalg import as_vector, svd_small

__all__ = [
    "ProxPenalty",
    "prox_l1",
    "prox_l2",
    "prox_lp_power",
    "prox_lp_norm",
    "prox_linf",
    "prox_group_l2",
    "prox_oi_norm",
    "project_l1_ball",
    "subgrad_residual",
    "validate_offsets",
]

KINDS = ("l1", "l2", "lp_power", "lp_norm", "linf", "group_l2", "oi_norm")


def prox_l1(x, lam):
    """Soft thresholding ``(|x| - lam)_+ sign(x)``."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def prox_l2(x, lam):
    """Block shrinkage ``(||x|| - lam)_+ x / ||x||``; zero at ``x = 0``."""
    x = np.asarray(x, dtype=np.float64)
    nrm = np.linalg.norm(x)
    if nrm <= lam:
        return np.zeros_like(x)
    return (1.0 - lam / nrm) * x


def _h_inverse(a, lam, p, max_iter=200):
    """Solve ``lam * p * t^(p-1) + t = a`` for t >= 0, elementwise.

    h is increasing, so Newton steps are kept inside a shrinking bracket
    and replaced by bisection whenever they leave it.
    """
    a = np.asarray(a, dtype=np.float64)
    c = lam * p
    lo = np.zeros_like(a)
    # both t and c t^(p-1) are below h(t), so each bounds the root
    hi = np.minimum(a, (a / c) ** (1.0 / (p - 1.0)))
    t = hi.copy()
    eps = np.finfo(np.float64).eps
    for _ in range(max_iter):
        ht = c * t ** (p - 1.0) + t
        above = ht > a
        hi = np.where(above, t, hi)
        lo = np.where(above, lo, t)
        done = (np.abs(ht - a) <= 4 * eps * a) | (hi - lo <= 4 * eps * hi)
        if np.all(done):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            dh = c * (p - 1.0) * t ** (p - 2.0) + 1.0
            cand = t - (ht - a) / dh
        inside = np.isfinite(cand) & (cand > lo) & (cand < hi)
        t = np.where(done, t, np.where(inside, cand, 0.5 * (lo + hi)))
    t[a == 0] = 0.0
    return t


def prox_lp_power(x, lam, p):
    """Prox of ``lam * ||.||_p^p`` for p > 1, via ``h^{-1}(|x|) sign(x)``."""
    if p <= 1:
        raise ValueError("prox_lp_power requires p > 1")
    x = np.asarray(x, dtype=np.float64)
    if p == 2:
        return x / (1.0 + 2.0 * lam)
    return np.sign(x) * _h_inverse(np.abs(x), lam, p)


def _dual_exponent(p):
    return np.inf if p == 1 else p / (p - 1.0)


def prox_lp_norm(x, gamma, p, max_steps=200):
    """Prox of ``gamma * ||.||_p`` for p >= 1.

    p = 1 and p = 2 use the closed forms.  Otherwise the output equals the
    prox of ``lam * ||.||_p^p`` for the unique lam with
    ``lam * p * ||y(lam)||_p^(p-1) = gamma``, found by Brent's method on
    log(lam).
    """
    x = np.asarray(x, dtype=np.float64)
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        return prox_l1(x, gamma)
    if p == 2:
        return prox_l2(x, gamma)
    q = _dual_exponent(p)
    if np.linalg.norm(x, ord=q) <= gamma:
        return np.zeros_like(x)

    def gap(lam):
        y = prox_lp_power(x, lam, p)
        return lam * p * np.linalg.norm(y, ord=p) ** (p - 1.0) - gamma, y

    lo, hi = -1.0, 1.0
    g_lo, _ = gap(np.exp(lo))
    while g_lo > 0:
        lo -= 10.0
        g_lo, _ = gap(np.exp(lo))
        if lo < -700:
            raise ConvergenceError("prox_lp_norm: could not bracket lam from below")
    g_hi, _ = gap(np.exp(hi))
    while g_hi < 0:
        hi += 10.0
        g_hi, _ = gap(np.exp(hi))
        if hi > 700:
            raise ConvergenceError("prox_lp_norm: could not bracket lam from above")
    if g_lo == 0:
        return gap(np.exp(lo))[1]
    if g_hi == 0:
        return gap(np.exp(hi))[1]
    s, info = brentq(lambda z: gap(np.exp(z))[0], lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                     maxiter=max_steps, full_output=True, disp=False)
    if info.converged:
        return gap(np.exp(s))[1]
    raise ConvergenceError(f"prox_lp_norm: root search did not converge in {max_steps} steps")


def project_l1_ball(x, radius):
    """Euclidean projection onto ``{u : ||u||_1 <= radius}``.

    Sort-based; ties are broken by original index via a stable sort.
    """
    x = np.asarray(x, dtype=np.float64)
    if radius <= 0:
        return np.zeros_like(x)
    a = np.abs(x)
    if a.sum() <= radius:
        return x.copy()
    order = np.argsort(-a, kind="stable")
    s = a[order]
    css = np.cumsum(s)
    k = np.arange(1, s.size + 1)
    cand = s - (css - radius) / k
    rho = int(np.nonzero(cand > 0)[0][-1])
    tau = (css[rho] - radius) / (rho + 1)
    return np.sign(x) * np.maximum(a - tau, 0.0)


def prox_linf(x, lam):
    """Prox of ``lam * ||.||_inf`` by the Moreau identity.

    ``x - P(x)`` where P projects onto the l1 ball of radius lam.
    """
    x = np.asarray(x, dtype=np.float64)
    return x - project_l1_ball(x, lam)


def validate_offsets(offsets, n):
    """Check block boundaries ``0 = o_0 < o_1 < ... < o_k = n``."""
    off = np.asarray(offsets, dtype=np.int64)
    if off.ndim != 1 or off.size < 2:
        raise InvalidGroupsError("offsets need at least two boundaries")
    if off[0] != 0 or off[-1] != n:
        raise InvalidGroupsError(f"blocks must cover 0..{n}, got {off[0]}..{off[-1]}")
    if np.any(np.diff(off) <= 0):
        raise InvalidGroupsError("blocks must be nonempty and non-overlapping")
    return off


def _offsets_from_groups(groups, n):
    """Accept either boundaries or a list of contiguous index blocks."""
    groups = list(groups)
    if groups and not np.isscalar(groups[0]):
        bounds = [0]
        for g in groups:
            g = [int(i) for i in g]
            if not g or g != list(range(bounds[-1], bounds[-1] + len(g))):
                raise InvalidGroupsError(
                    "groups must be contiguous, ordered and non-overlapping"
                )
            bounds.append(bounds[-1] + len(g))
        groups = bounds
    return validate_offsets(groups, n)


def _block_norms(x, off):
    sq = np.add.reduceat(x * x, off[:-1]) if x.size else np.zeros(0)
    return np.sqrt(sq)


def prox_group_l2(x, lam, groups):
    """Blockwise l2 shrinkage over contiguous, disjoint blocks.

    `groups` is either a boundary array ``[0, o_1, ..., n]`` or a list of
    contiguous index blocks covering ``0..n-1``.
    """
    x = np.asarray(x, dtype=np.float64)
    off = _offsets_from_groups(groups, x.size)
    norms = _block_norms(x, off)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norms > lam, 1.0 - lam / norms, 0.0)
    return x * np.repeat(factor, np.diff(off))


def prox_oi_norm(X, inner: "ProxPenalty"):
    """Prox of an orthogonally invariant norm ``h(sigma(X))``.

    Shrinks the singular values with ``inner.prox`` and reassembles.
    """
    if inner.kind not in ("l1", "l2", "lp_norm", "linf"):
        raise UnsupportedPenaltyError(
            f"inner penalty {inner.kind!r} is not a symmetric gauge"
        )
    X = np.asarray(X, dtype=np.float64)
    if not np.any(X):
        return np.zeros_like(X)
    U, s, V = svd_small(X)
    g = inner.prox(s)
    # the prox of a symmetric gauge preserves the ordering of s
    g = np.maximum(g, 0.0)
    return (U * g) @ V.T


@dataclass(frozen=True)
class ProxPenalty:
    """A simple convex penalty with an exact prox.

    ``kind`` selects the base function; ``weight`` multiplies it.  A weight
    of zero gives the zero function.  Kind-specific parameters:

    - ``lp_power``: ``p > 1`` and ``lam``, for ``lam * ||z||_p^p``
    - ``lp_norm``: ``p >= 1`` and ``gamma``, for ``gamma * ||z||_p``
    - ``group_l2``: ``offsets``, block boundaries of the sum of block norms
    - ``oi_norm``: ``inner``, a gauge penalty applied to singular values
    """

    kind: str
    weight: float = 1.0
    p: float | None = None
    lam: float = 1.0
    gamma: float = 1.0
    offsets: tuple[int, ...] | None = None
    inner: "ProxPenalty | None" = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedPenaltyError(f"unknown penalty kind {self.kind!r}")
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ValueError("weight must be finite and nonnegative")
        if self.kind == "lp_power" and (self.p is None or self.p <= 1 or self.lam <= 0):
            raise ValueError("lp_power requires p > 1 and lam > 0")
        if self.kind == "lp_norm" and (self.p is None or self.p < 1 or self.gamma <= 0):
            raise ValueError("lp_norm requires p >= 1 and gamma > 0")
        if self.kind == "group_l2":
            if self.offsets is None:
                raise InvalidGroupsError("group_l2 requires offsets")
            off = validate_offsets(self.offsets, int(self.offsets[-1]))
            object.__setattr__(self, "offsets", tuple(int(o) for o in off))
        if self.kind == "oi_norm" and self.inner is None:
            raise ValueError("oi_norm requires an inner penalty")

    # constructors -------------------------------------------------------
    @classmethod
    def l1(cls, weight=1.0):
        return cls("l1", weight)

    @classmethod
    def l2(cls, weight=1.0):
        return cls("l2", weight)

    @classmethod
    def lp_power(cls, p, lam=1.0, weight=1.0):
        return cls("lp_power", weight, p=float(p), lam=float(lam))

    @classmethod
    def lp_norm(cls, p, gamma=1.0, weight=1.0):
        return cls("lp_norm", weight, p=float(p), gamma=float(gamma))

    @classmethod
    def linf(cls, weight=1.0):
        return cls("linf", weight)

    @classmethod
    def group_l2(cls, offsets: Sequence[int], weight=1.0):
        return cls("group_l2", weight, offsets=tuple(int(o) for o in offsets))

    @classmethod
    def oi_norm(cls, inner: "ProxPenalty", weight=1.0):
        return cls("oi_norm", weight, inner=inner)

    def scaled(self, factor: float) -> "ProxPenalty":
        """Same penalty multiplied by ``factor``."""
        return replace(self, weight=self.weight * factor)

    @property
    def is_zero(self) -> bool:
        return self.weight == 0.0

    @property
    def dim(self) -> int | None:
        """Required input length, if the penalty fixes one."""
        return self.offsets[-1] if self.kind == "group_l2" else None

    def _coef(self, scale):
        """Effective multiplier of the base function."""
        c = scale * self.weight
        if self.kind == "lp_power":
            return c * self.lam
        if self.kind == "lp_norm":
            return c * self.gamma
        return c

    def __call__(self, z) -> float:
        """Penalty value."""
        if self.is_zero:
            return 0.0
        c = self._coef(1.0)
        z = np.asarray(z, dtype=np.float64)
        k = self.kind
        if k == "l1":
            return c * float(np.abs(z).sum())
        if k == "l2":
            return c * float(np.linalg.norm(z))
        if k == "lp_power":
            return c * float(np.sum(np.abs(z) ** self.p))
        if k == "lp_norm":
            return c * float(np.linalg.norm(z.ravel(), ord=self.p))
        if k == "linf":
            return c * float(np.max(np.abs(z), initial=0.0))
        if k == "group_l2":
            return c * float(_block_norms(z, np.asarray(self.offsets)).sum())
        s = np.linalg.svd(np.atleast_2d(z), compute_uv=False)
        return c * self.inner(s)

    def prox(self, x, scale: float = 1.0):
        """Prox of ``scale * self`` at `x`."""
        if self.is_zero or scale == 0:
            return np.array(x, dtype=np.float64, copy=True)
        c = self._coef(scale)
        k = self.kind
        if k == "l1":
            return prox_l1(x, c)
        if k == "l2":
            return prox_l2(x, c)
        if k == "lp_power":
            return prox_lp_power(x, c, self.p)
        if k == "lp_norm":
            return prox_lp_norm(x, c, self.p)
        if k == "linf":
            return prox_linf(x, c)
        if k == "group_l2":
            return prox_group_l2(x, c, self.offsets)
        return prox_oi_norm(x, self.inner.scaled(c))


def _dist_to_simplex(h, radius):
    """Distance from h to ``{w >= 0, sum(w) = radius}``."""
    # projection onto the simplex via the l1-ball routine on the positive part
    n = h.size
    s = np.sort(h)[::-1]
    css = np.cumsum(s)
    k = np.arange(1, n + 1)
    cand = s - (css - radius) / k
    rho = int(np.nonzero(cand > 0)[0][-1]) if np.any(cand > 0) else 0
    tau = (css[rho] - radius) / (rho + 1)
    w = np.maximum(h - tau, 0.0)
    return float(np.linalg.norm(h - w))


def _residual_vec(kind, c, p, offsets, g, y, ztol=0.0):
    """Per-kind distance from g = x - y to c * d(base)(y).

    Entries (or block norms) of y at most `ztol` count as exact zeros.
    """
    if kind == "l1":
        ay = np.abs(y)
        r = np.where(ay > ztol, g - c * np.sign(y), np.maximum(np.abs(g) - c, 0.0))
        return float(np.linalg.norm(r))
    if kind == "l2":
        ny = np.linalg.norm(y)
        if ny > ztol:
            return float(np.linalg.norm(g - c * y / ny))
        return max(float(np.linalg.norm(g)) - c, 0.0)
    if kind == "group_l2":
        off = np.asarray(offsets)
        total = 0.0
        for a, b in zip(off[:-1], off[1:]):
            total += _residual_vec("l2", c, None, None, g[a:b], y[a:b], ztol) ** 2
        return float(np.sqrt(total))
    if kind == "lp_power":
        grad = c * p * np.sign(y) * np.abs(y) ** (p - 1.0)
        return float(np.linalg.norm(g - grad))
    if kind == "lp_norm":
        if p == 1:
            return _residual_vec("l1", c, None, None, g, y, ztol)
        if p == 2:
            return _residual_vec("l2", c, None, None, g, y, ztol)
        ny = np.linalg.norm(y, ord=p)
        if ny > ztol:
            grad = c * np.sign(y) * np.abs(y) ** (p - 1.0) / ny ** (p - 1.0)
            return float(np.linalg.norm(g - grad))
        # distance to the dual ball c*B_q equals the norm of the Moreau
        # complement, which is the prox of c*||.||_p at g
        return float(np.linalg.norm(prox_lp_norm(g, c, p)))
    if kind == "linf":
        ay = np.abs(y)
        M = ay.max(initial=0.0)
        if M <= ztol:
            return float(np.linalg.norm(g - project_l1_ball(g, c)))
        active = ay >= M * (1.0 - 1e-12)
        off_part = np.linalg.norm(g[~active])
        on = np.sign(y[active]) * g[active]
        return float(np.hypot(off_part, _dist_to_simplex(on, c)))
    raise UnsupportedPenaltyError(f"no residual for kind {kind!r}")


def subgrad_residual(penalty: ProxPenalty, x, y, ztol: float | None = None) -> float:
    """Distance from ``x - y`` to the subdifferential of `penalty` at `y`.

    Zero (to rounding) iff ``y = penalty.prox(x)``.  Entries of y below
    `ztol` (default ``1e-14 * max(1, |x|_inf)``) are treated as exact zeros
    at the kinks.  For ``oi_norm`` the check runs in the singular basis of
    `x`: the off-diagonal part of ``U^T y V`` is added to the inner
    residual on the diagonal.
    """
    if ztol is None:
        ztol = 1e-14 * max(1.0, float(np.max(np.abs(np.asarray(x, dtype=float)), initial=0.0)))
    if penalty.kind == "oi_norm":
        X = np.asarray(x, dtype=np.float64)
        Y = np.asarray(y, dtype=np.float64)
        if X.shape != Y.shape or X.ndim != 2:
            raise ValueError("oi_norm residual needs matrices of equal shape")
        U, s, Vt = np.linalg.svd(X, full_matrices=True)
        P = U.T @ Y @ Vt.T
        r = min(X.shape)
        diag = np.diag(P)[:r].copy()
        off = P.copy()
        off[np.arange(r), np.arange(r)] = 0.0
        sig = np.zeros(r)
        sig[: s.size] = s
        inner = penalty.inner.scaled(penalty.weight)
        inner_res = subgrad_residual(inner, sig, diag, ztol)
        return float(np.hypot(inner_res, np.linalg.norm(off)))
    x = as_vector(x)
    y = as_vector(y, name="y")
    if x.shape != y.shape:
        raise ValueError("x and y must have the same shape")
    g = x - y
    if penalty.is_zero:
        return float(np.linalg.norm(g))
    c = penalty._coef(1.0)
    return _residual_vec(penalty.kind, c, penalty.p, penalty.offsets, g, y, ztol)
