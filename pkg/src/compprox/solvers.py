"""Proximal and accelerated outer loops for ``min 0.5||Ax - y||^2 + r w(Bx)``.

Each outer step needs ``prox_{(r w / L) o B}`` at a gradient point, which
is computed by the fixed-point method of :mod:`compprox.fixed_point` with
``Q = L I``.  The accelerated loop uses the theta/rho momentum sequence.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .fixed_point import FixedPointState, check_lam, gram_spectrum, prox_composite
from .linalg import LinearOperator, as_vector, lipschitz_square_loss
from .prox import ProxPenalty

__all__ = [
    "SquareLoss",
    "CompositeProblem",
    "SolverConfig",
    "SolverTrace",
    "grad_square_loss",
    "theta_rho_sequence",
    "solve_proximal",
    "solve_accelerated",
    "solve",
    "TRACE_HEADER",
]

log = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "objective", "inner_iters", "step_norm", "time_ms")


class SquareLoss:
    """``f(x) = 0.5 ||A x - y||^2`` with gradient Lipschitz constant L."""

    def __init__(self, A: LinearOperator, y, L: float | None = None):
        self.A = A
        self.y = as_vector(y, "y")
        if self.y.size != A.rows:
            raise DimensionError(f"y has length {self.y.size}, A has {A.rows} rows")
        if L is None:
            L, exact = lipschitz_square_loss(A)
        else:
            exact = False
        if not L >= 0 or not math.isfinite(L):
            raise ValueError("Lipschitz constant must be finite and nonnegative")
        self.L = float(L)
        self.L_exact = exact

    @property
    def d(self) -> int:
        return self.A.cols

    def residual(self, x):
        return self.A.apply(x) - self.y

    def __call__(self, x) -> float:
        r = self.residual(x)
        return 0.5 * float(r @ r)

    def grad(self, x):
        return self.A.rapply(self.residual(x))


def grad_square_loss(loss: SquareLoss, x) -> np.ndarray:
    """``A'(Ax - y)``."""
    return loss.grad(as_vector(x))


@dataclass
class CompositeProblem:
    """``F(x) = loss(x) + reg_weight * penalty(B x)``."""

    loss: SquareLoss
    penalty: ProxPenalty
    B: LinearOperator
    reg_weight: float = 1.0

    def __post_init__(self):
        if self.B.cols != self.loss.d:
            raise DimensionError(f"A has {self.loss.d} columns, B has {self.B.cols}")
        if self.penalty.dim is not None and self.penalty.dim != self.B.rows:
            raise DimensionError("penalty blocks do not match the rows of B")
        if not self.reg_weight >= 0:
            raise ValueError("reg_weight must be nonnegative")

    @property
    def d(self) -> int:
        return self.loss.d

    def regularizer(self, x) -> float:
        if self.reg_weight == 0 or self.B.rows == 0:
            return 0.0
        return self.reg_weight * self.penalty(self.B.apply(x))

    def objective(self, x) -> float:
        return self.loss(x) + self.regularizer(x)


@dataclass
class SolverConfig:
    """Tolerances and switches for both outer loops.

    ``lam`` is the fixed-point step of the inner map; ``"auto"`` picks
    ``2L / (mu_max + mu_min)`` from the extreme eigenvalues of ``B B'``.
    ``eps`` is an absolute objective tolerance.  The accelerated loop stops
    when the best objective improved by at most eps over the last
    ``window`` iterations and, with ``settled`` on, the current objective
    is itself within eps of the best (so a momentum overshoot that stalls
    the best value does not end the run).  The plain loop stops when one
    step changes the objective by at most eps.  Reaching ``target`` (if
    set) also stops.
    """

    kappa: float = 0.2
    lam: float | str = "auto"
    inner_tol: float = 1e-10
    inner_max_iter: int = 1000
    eps: float = 1e-8
    max_iter: int = 10000
    warm_start: bool = True
    accelerated: bool = True
    window: int = 10
    target: float | None = None
    record_time: bool = False
    exact_identity_prox: bool = True
    backend: str | None = None
    seed: int = 0
    settled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.kappa < 1.0:
            raise ValueError("kappa must lie in [0, 1)")
        if self.inner_tol <= 0 or self.eps <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.inner_max_iter < 1 or self.window < 1:
            raise ValueError("iteration caps and window must be positive")
        if isinstance(self.lam, str):
            if self.lam != "auto":
                raise ValueError("lam must be 'auto' or a positive number")
        elif not self.lam > 0:
            raise ValueError("lam must be positive")


@dataclass
class SolverTrace:
    """Per-iteration record of an outer loop run."""

    objective: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    time_ms: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    converged: bool = False
    hit_cap: bool = False
    inner_failures: int = 0

    def __len__(self):
        return len(self.objective)

    def append(self, obj, inner, step, ms):
        self.objective.append(float(obj))
        self.inner_iters.append(int(inner))
        self.step_norm.append(float(step))
        self.time_ms.append(float(ms))

    @property
    def iterations(self) -> int:
        return len(self.objective)

    @property
    def mean_inner_iters(self) -> float:
        return float(np.mean(self.inner_iters)) if self.inner_iters else 0.0

    @property
    def total_time_ms(self) -> float:
        return float(np.sum(self.time_ms)) if self.time_ms else 0.0

    @property
    def final_objective(self) -> float:
        return self.objective[-1] if self.objective else math.nan

    @property
    def best_objective(self) -> float:
        return min(self.objective) if self.objective else math.nan

    def rows(self):
        for t in range(len(self)):
            yield (t + 1, self.objective[t], self.inner_iters[t], self.step_norm[t], self.time_ms[t])

    def to_csv(self, path) -> None:
        """Write ``iter,objective,inner_iters,step_norm,time_ms`` (LF endings)."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for it, obj, inner, step, ms in self.rows():
                w.writerow([it, _fmt(obj), inner, _fmt(step), _fmt(ms)])


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def theta_rho_sequence(T: int):
    """Momentum sequences for T iterations.

    ``theta_1 = 1`` and ``(1 - theta_{t+1}) / theta_{t+1}^2 = 1 / theta_t^2``;
    ``rho_t = 1 - theta_t + theta_t / theta_{t-1}`` (``rho_1 = 1``).
    Returned arrays are 0-based: ``thetas[t-1]`` is theta_t.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    th = np.empty(T)
    rho = np.empty(T)
    th[0] = 1.0
    rho[0] = 1.0
    for t in range(1, T):
        a = th[t - 1]
        th[t] = 0.5 * (-a * a + a * math.sqrt(a * a + 4.0))
        rho[t] = 1.0 - th[t] + th[t] / a
    return th, rho


def _next_theta(theta):
    return 0.5 * (-theta * theta + theta * math.sqrt(theta * theta + 4.0))


class _ProxStep:
    """``x -> prox_{(r w / L) o B}(x)`` with warm-started inner state."""

    def __init__(self, problem: CompositeProblem, config: SolverConfig, L: float, meta: dict):
        self.problem = problem
        self.config = config
        self.state: FixedPointState | None = None
        self.trivial = problem.reg_weight == 0 or problem.penalty.is_zero or problem.B.rows == 0
        self.exact = (not self.trivial and problem.B.is_identity and config.exact_identity_prox
                      and problem.penalty.kind != "oi_norm")
        self.pen = problem.penalty.scaled(problem.reg_weight / L)
        self.spec = None
        self.lam_inner = None
        if self.trivial or self.exact:
            meta["lam_rule"] = "none (closed-form prox)"
            return
        spec = gram_spectrum(problem.B, seed=config.seed)
        self.spec = spec
        meta["mu_max"] = spec.lambda_max
        meta["mu_min"] = spec.lambda_min
        meta["spectrum_converged"] = spec.converged
        if config.lam == "auto":
            mu_max = spec.lambda_max * (1.0 + 1e-9)
            lam = 2.0 * L / (mu_max + spec.lambda_min) if mu_max > 0 else L
            meta["lam_rule"] = "2L/(mu_max+mu_min), mu = eig(B B^T)"
        else:
            lam = float(config.lam)
            meta["lam_rule"] = "explicit"
        # inner step acts on B Q^{-1} B' = B B' / L
        self.lam_inner = check_lam(lam / L, spec)
        meta["lam"] = lam

    def __call__(self, z):
        if self.trivial:
            return z, 0, True
        if self.exact:
            return self.pen.prox(z), 0, True
        cfg = self.config
        warm = self.state if (cfg.warm_start and self.state is not None) else None
        u, st = prox_composite(self.pen, self.problem.B, z, lam=self.lam_inner, kappa=cfg.kappa,
                               tol=cfg.inner_tol, max_iter=cfg.inner_max_iter, warm_start=warm,
                               spectrum=self.spec, backend=cfg.backend)
        self.state = st
        return u, st.iterations, st.converged


def _run(problem: CompositeProblem, config: SolverConfig, accelerated: bool):
    loss = problem.loss
    L = loss.L
    trace = SolverTrace()
    meta = trace.meta
    meta.update(L=L, L_exact=loss.L_exact, kappa=config.kappa, accelerated=accelerated,
                eps=config.eps, window=config.window if accelerated else 1)
    d = problem.d
    x = np.zeros(d)
    if L == 0:
        # constant loss: the minimizer of r w(Bx) over x = 0 start is 0
        trace.append(problem.objective(x), 0, 0.0, 0.0 if config.record_time else math.nan)
        trace.converged = True
        return x, trace
    step = _ProxStep(problem, config, L, meta)
    alpha = x.copy()
    theta = 1.0
    F0 = problem.objective(x)
    best_x, best_F = x.copy(), F0
    prev_F = F0
    best_hist = [F0]
    for t in range(1, config.max_iter + 1):
        t0 = time.perf_counter() if config.record_time else 0.0
        z = alpha - loss.grad(alpha) / L
        x_new, inner, ok = step(z)
        if not ok:
            trace.inner_failures += 1
        F = problem.objective(x_new)
        if accelerated:
            theta_next = _next_theta(theta)
            rho = 1.0 - theta_next + theta_next / theta
            alpha = rho * x_new - (rho - 1.0) * x
            theta = theta_next
        else:
            alpha = x_new
        dx = float(np.linalg.norm(x_new - x))
        x = x_new
        ms = (time.perf_counter() - t0) * 1e3 if config.record_time else math.nan
        trace.append(F, inner, dx, ms)
        if F < best_F:
            best_F, best_x = F, x.copy()
        best_hist.append(best_F)
        if config.target is not None and F <= config.target:
            trace.converged = True
            break
        if accelerated:
            if (t >= config.window and best_hist[-1 - config.window] - best_F <= config.eps
                    and (not config.settled or F - best_F <= config.eps)):
                trace.converged = True
                break
        elif abs(F - prev_F) <= config.eps:
            trace.converged = True
            break
        prev_F = F
    else:
        trace.hit_cap = True
    if trace.inner_failures:
        log.info("%d outer iterations used a non-converged inner fixed point", trace.inner_failures)
    meta["best_objective"] = best_F
    return best_x, trace


def solve_proximal(problem: CompositeProblem, config: SolverConfig | None = None):
    """Unaccelerated proximal loop (alpha_t = x_t). Returns ``(x, trace)``."""
    return _run(problem, config or SolverConfig(accelerated=False), accelerated=False)


def solve_accelerated(problem: CompositeProblem, config: SolverConfig | None = None):
    """Accelerated loop with ``alpha_{t+1} = rho x_{t+1} - (rho - 1) x_t``.

    Starts from ``x_1 = alpha_1 = 0``.  Returns the best iterate seen and the
    trace; the objective is not monotone along the way.
    """
    return _run(problem, config or SolverConfig(), accelerated=True)


def solve(problem: CompositeProblem, config: SolverConfig | None = None):
    """Dispatch on ``config.accelerated``."""
    config = config or SolverConfig()
    return _run(problem, config, accelerated=config.accelerated)


def config_dict(config: SolverConfig) -> dict:
    return asdict(config)
