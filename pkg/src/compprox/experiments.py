"""Synthetic benchmark problems and the suite runner.

Four suites:

overlap
    Group lasso with the chain/side/block overlapping group template on a
    column-normalized uniform design.
tree
    Group lasso over all subtrees of a balanced tree, fitting signals in a
    random Gaussian dictionary.
graph
    l1 penalty on the incidence matrix of a two-cluster random graph, with
    labels observed on a few vertices.
fused
    Same cluster data with the first-difference (path) operator.

Each run solves with the accelerated loop, then with the plain proximal
loop until it reaches the accelerated objective, and records both traces.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .builders import (
    Graph,
    GroupSystem,
    fused_difference_operator,
    group_selection_operator,
    incidence_operator,
    tree_group_system,
)
from .linalg import LinearOperator
from .prox import ProxPenalty
from .solvers import CompositeProblem, SolverConfig, SquareLoss, solve_accelerated, solve_proximal

__all__ = [
    "OverlapExperimentSpec",
    "GraphExperimentSpec",
    "TreeExperimentSpec",
    "Instance",
    "gen_overlap_groups",
    "gen_overlap_data",
    "gen_cluster_graph",
    "gen_fused_data",
    "gen_tree_data",
    "support_mass",
    "sign_recovery",
    "run_one",
    "run_benchmark",
    "SUITES",
    "DEFAULT_SIZES",
    "FULL_SIZES",
    "SUMMARY_HEADER",
]

log = logging.getLogger(__name__)

SUITES = ("overlap", "tree", "graph", "fused")
DEFAULT_SIZES = {"overlap": [100, 200, 400], "tree": [256], "graph": [50, 100], "fused": [100]}
FULL_SIZES = {
    "overlap": list(range(1000, 4001, 100)),
    "tree": [256],
    "graph": list(range(100, 361, 20)),
    "fused": [100],
}
FULL_REPEATS = 10
SUMMARY_HEADER = (
    "d",
    "mean_outer_iters",
    "mean_inner_iters",
    "mean_time_ms",
    "mean_baseline_outer_iters",
    "recovered_fraction",
    "failures",
)


@dataclass(frozen=True)
class OverlapExperimentSpec:
    d: int
    seed: int = 0
    noise_sd: float = 0.001
    reg_weight: float = 1e-5
    n_support: int = 21
    normalize: str = "column"

    def __post_init__(self):
        if self.d < 80:
            raise ValueError("the overlapping group template needs d >= 80")


@dataclass(frozen=True)
class GraphExperimentSpec:
    d: int
    seed: int = 0
    s: int = 10
    p_edge: float = 0.5
    reg_weight: float = 0.1

    def __post_init__(self):
        if self.d % 2 or self.d < 2:
            raise ValueError("d must be a positive even number")
        if not 0 < self.s <= self.d:
            raise ValueError("need 0 < s <= d")

    @property
    def cross_pairs(self) -> int:
        return self.d // 25


@dataclass(frozen=True)
class TreeExperimentSpec:
    branching: tuple[int, ...] = (10, 2, 2)
    n_pixels: int = 256
    seed: int = 0
    noise_sd: float = 0.01
    reg_weight: float = 0.05


@dataclass
class Instance:
    """A generated problem with its ground truth."""

    problem: CompositeProblem
    x_true: np.ndarray
    groups: GroupSystem | None = None
    graph: Graph | None = None
    labels: np.ndarray | None = None
    observed: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def gen_overlap_groups(d: int) -> GroupSystem:
    """The fixed template: five chained groups, five side groups, then blocks of 10.

    In 1-based terms: {1..5}, {5..9}, {9..13}, {13..17}, {17..21},
    {4,22..30}, {8,31..40}, {12,41..50}, {16,51..60}, {20,61..70}, then
    {71..80}, ..., {d-9..d}.  Indices here are 0-based.  When d - 70 is not
    a multiple of 10 the last block is shorter and a warning is issued.
    """
    if d < 80:
        raise ValueError("the overlapping group template needs d >= 80")
    groups = [tuple(range(4 * k, 4 * k + 5)) for k in range(5)]
    groups.append((3,) + tuple(range(21, 30)))
    for k, start in enumerate(range(30, 70, 10)):
        groups.append((7 + 4 * k,) + tuple(range(start, start + 10)))
    for start in range(70, d, 10):
        groups.append(tuple(range(start, min(start + 10, d))))
    if (d - 70) % 10:
        warnings.warn(f"d={d}: trailing group truncated to {(d - 70) % 10} entries", stacklevel=2)
    return GroupSystem(d, tuple(groups))


def _group_problem(A, y, gs, reg_weight) -> CompositeProblem:
    B, offsets = group_selection_operator(gs)
    loss = SquareLoss(LinearOperator.from_matrix(A, name="design"), y)
    return CompositeProblem(loss, ProxPenalty.group_l2(offsets), B, reg_weight)


def gen_overlap_data(spec: OverlapExperimentSpec, rng: np.random.Generator | None = None) -> Instance:
    """Uniform design with ``floor(0.7 d)`` rows and a 21-sparse target.

    Nonzero target entries are standard normal divided by the number of
    groups containing the coordinate; noise is Gaussian with ``noise_sd``.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    d = spec.d
    s = int(math.floor(0.7 * d))
    gs = gen_overlap_groups(d)
    A = rng.uniform(size=(s, d))
    if spec.normalize == "column":
        A /= np.linalg.norm(A, axis=0)
    elif spec.normalize == "row":
        A /= np.linalg.norm(A, axis=1, keepdims=True)
    elif spec.normalize != "none":
        raise ValueError(f"unknown normalization {spec.normalize!r}")
    x_true = np.zeros(d)
    k = spec.n_support
    x_true[:k] = rng.standard_normal(k) / gs.membership()[:k]
    y = A @ x_true + spec.noise_sd * rng.standard_normal(s)
    problem = _group_problem(A, y, gs, spec.reg_weight)
    return Instance(problem, x_true, groups=gs, info={"s": s, "m": gs.m})


def _cluster_data(spec: GraphExperimentSpec, rng):
    d, half = spec.d, spec.d // 2
    iu, ju = np.triu_indices(half, k=1)
    edges = []
    for off in (0, half):
        keep = rng.uniform(size=iu.size) < spec.p_edge
        edges.extend(zip((iu[keep] + off).tolist(), (ju[keep] + off).tolist()))
    n_cross = spec.cross_pairs
    flat = rng.choice(half * half, size=n_cross, replace=False)
    edges.extend((int(f // half), int(half + f % half)) for f in np.sort(flat))
    labels = np.where(np.arange(d) < half, 1.0, -1.0)
    observed = np.sort(rng.choice(d, size=spec.s, replace=False))
    A = sp.csr_matrix((np.ones(spec.s), (np.arange(spec.s), observed)), shape=(spec.s, d))
    return Graph(d, tuple(edges)), labels, observed, A


def gen_cluster_graph(spec: GraphExperimentSpec, rng: np.random.Generator | None = None) -> Instance:
    """Two equal clusters, intra edges with probability p_edge, d/25 cross pairs.

    The loss is the square loss on the `s` observed vertex labels (A is a
    row selector) and the penalty is l1 on the incidence operator.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    graph, labels, observed, A = _cluster_data(spec, rng)
    loss = SquareLoss(LinearOperator.from_matrix(A, name="selector"), labels[observed], L=1.0)
    loss.L_exact = True
    problem = CompositeProblem(loss, ProxPenalty.l1(), incidence_operator(graph), spec.reg_weight)
    return Instance(problem, labels.copy(), graph=graph, labels=labels, observed=observed,
                    info={"edges": len(graph.edges)})


def gen_fused_data(spec: GraphExperimentSpec, rng: np.random.Generator | None = None) -> Instance:
    """The cluster data of :func:`gen_cluster_graph` with the path difference operator."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    graph, labels, observed, A = _cluster_data(spec, rng)
    loss = SquareLoss(LinearOperator.from_matrix(A, name="selector"), labels[observed], L=1.0)
    loss.L_exact = True
    problem = CompositeProblem(loss, ProxPenalty.l1(), fused_difference_operator(spec.d), spec.reg_weight)
    return Instance(problem, labels.copy(), graph=graph, labels=labels, observed=observed)


def gen_tree_data(spec: TreeExperimentSpec, rng: np.random.Generator | None = None) -> Instance:
    """Random unit-norm Gaussian dictionary, one atom per tree node.

    The signal combines the atoms along one random root-to-leaf path.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    gs = tree_group_system(spec.branching)
    n = gs.d
    D = rng.standard_normal((spec.n_pixels, n))
    D /= np.linalg.norm(D, axis=0)
    # walk down the tree: the subtree of a node is itself plus its children's subtrees
    path = [0]
    node = 0
    while len(gs.groups[node]) > 1:
        kids = [c for c in gs.groups[node][1:] if _is_child(gs, node, c)]
        node = int(kids[rng.integers(len(kids))])
        path.append(node)
    x_true = np.zeros(n)
    x_true[path] = rng.uniform(0.5, 1.5, size=len(path)) * rng.choice([-1.0, 1.0], size=len(path))
    y = D @ x_true + spec.noise_sd * rng.standard_normal(spec.n_pixels)
    problem = _group_problem(D, y, gs, spec.reg_weight)
    return Instance(problem, x_true, groups=gs, info={"path": path, "m": gs.m})


def _is_child(gs: GroupSystem, parent: int, node: int) -> bool:
    """True when `node` is a direct child of `parent`."""
    inner = set(gs.groups[parent][1:])
    for other in gs.groups[parent][1:]:
        if other != node and node in gs.groups[other]:
            return False
    return node in inner


def support_mass(x, support) -> float:
    """Fraction of ``||x||_1`` carried by the index set `support`."""
    total = float(np.abs(x).sum())
    if total == 0:
        return 0.0
    return float(np.abs(x[list(support)]).sum()) / total


def sign_recovery(x, labels) -> bool:
    return bool(np.all(np.sign(x) == np.sign(labels)))


def _identifiable_path_vertices(observed, labels):
    """Vertices whose fused-lasso value is pinned down by the observations.

    On a path, any monotone transition between the last observed vertex
    of the first cluster and the first observed vertex of the second is
    optimal, so vertices strictly inside that gap are excluded.
    """
    d = labels.size
    pos = observed[labels[observed] > 0]
    neg = observed[labels[observed] < 0]
    keep = np.ones(d, dtype=bool)
    if pos.size and neg.size:
        lo, hi = pos.max(), neg.min()
        if lo < hi:
            keep[lo + 1:hi] = False
    return keep


SUITE_CONFIG = {
    "overlap": dict(eps=1e-8, max_iter=50000, inner_max_iter=1000),
    "tree": dict(eps=1e-8, max_iter=50000, inner_max_iter=1000),
    "graph": dict(eps=1e-8, max_iter=20000, inner_max_iter=1000),
    "fused": dict(eps=1e-8, max_iter=20000, inner_max_iter=1000),
}
BASELINE_MAX_ITER = 200000


def make_instance(suite: str, size: int, rng: np.random.Generator) -> Instance:
    if suite == "overlap":
        return gen_overlap_data(OverlapExperimentSpec(d=size), rng)
    if suite == "tree":
        return gen_tree_data(TreeExperimentSpec(n_pixels=size), rng)
    if suite == "graph":
        return gen_cluster_graph(GraphExperimentSpec(d=size), rng)
    if suite == "fused":
        return gen_fused_data(GraphExperimentSpec(d=size), rng)
    raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")


def recovered(suite: str, inst: Instance, x) -> bool:
    if suite == "overlap":
        return support_mass(x, range(21)) >= 0.99
    if suite == "tree":
        return support_mass(x, inst.info["path"]) >= 0.99
    if suite == "graph":
        return sign_recovery(x, inst.labels)
    keep = _identifiable_path_vertices(inst.observed, inst.labels)
    return sign_recovery(x[keep], inst.labels[keep])


def run_one(suite: str, size: int, run_seed: int, out_dir=None, record_time=False,
            config: SolverConfig | None = None) -> dict:
    """Solve one instance with both loops; optionally write trace CSVs."""
    rng = np.random.default_rng(np.random.SeedSequence([run_seed, size]))
    inst = make_instance(suite, size, rng)
    base_cfg = config or SolverConfig(**SUITE_CONFIG[suite])
    acc_cfg = replace(base_cfg, accelerated=True, record_time=record_time)
    x_acc, tr_acc = solve_accelerated(inst.problem, acc_cfg)
    F_acc = tr_acc.best_objective
    plain_cfg = replace(base_cfg, accelerated=False, record_time=record_time, target=F_acc,
                        max_iter=max(BASELINE_MAX_ITER, base_cfg.max_iter))
    x_base, tr_base = solve_proximal(inst.problem, plain_cfg)
    if out_dir is not None:
        run_dir = Path(out_dir) / f"d{size}_seed{run_seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        tr_acc.to_csv(run_dir / "trace.csv")
        tr_base.to_csv(run_dir / "trace_baseline.csv")
    return {
        "suite": suite,
        "d": size,
        "seed": run_seed,
        "outer_iters": tr_acc.iterations,
        "mean_inner_iters": tr_acc.mean_inner_iters,
        "time_ms": tr_acc.total_time_ms if record_time else math.nan,
        "baseline_outer_iters": tr_base.iterations,
        "objective": F_acc,
        "baseline_objective": tr_base.best_objective,
        "converged": tr_acc.converged,
        "baseline_converged": tr_base.converged,
        "recovered": recovered(suite, inst, x_acc),
        "x": x_acc,
        "x_baseline": x_base,
        "trace": tr_acc,
        "trace_baseline": tr_base,
    }


def _run_task(args):
    suite, size, run_seed, out_dir, record_time = args
    try:
        res = run_one(suite, size, run_seed, out_dir, record_time)
        for k in ("x", "x_baseline", "trace", "trace_baseline"):
            res.pop(k)
        res["error"] = ""
    except Exception as exc:  # noqa: BLE001 - partial failures are recorded
        log.exception("run %s d=%s seed=%s failed", suite, size, run_seed)
        res = {"suite": suite, "d": size, "seed": run_seed, "error": f"{type(exc).__name__}: {exc}"}
    return res


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _mean(vals):
    return float(np.mean(vals)) if vals else math.nan


@dataclass
class BenchmarkResult:
    suite: str
    summary_path: Path
    runs: list
    failures: int

    @property
    def ok(self) -> bool:
        return self.failures == 0


def run_benchmark(suite: str, sizes=None, repeats: int = 1, out_dir="bench_out", seed: int = 0,
                  jobs: int = 1, full_scale: bool = False, record_time: bool = False) -> BenchmarkResult:
    """Run a suite over sizes x repeats and write per-run traces and a summary.

    Layout: ``<out_dir>/<suite>/d<d>_seed<s>/trace.csv`` (accelerated),
    ``trace_baseline.csv`` (plain loop), and ``<out_dir>/<suite>/summary.csv``.
    Run r uses seed ``seed + r``; its generator is derived from that seed
    and the size only, so results do not depend on scheduling.
    """
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    if sizes is None:
        sizes = (FULL_SIZES if full_scale else DEFAULT_SIZES)[suite]
    if full_scale and repeats == 1:
        repeats = FULL_REPEATS
    suite_dir = Path(out_dir) / suite
    suite_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(suite, int(d), seed + r, str(suite_dir), record_time) for d in sizes for r in range(repeats)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            runs = list(ex.map(_run_task, tasks))
    else:
        runs = [_run_task(t) for t in tasks]
    failures = sum(1 for r in runs if r["error"])
    summary_path = suite_dir / "summary.csv"
    with summary_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for d in sizes:
            ok = [r for r in runs if r["d"] == d and not r["error"]]
            w.writerow([
                d,
                _fmt(_mean([r["outer_iters"] for r in ok])),
                _fmt(_mean([r["mean_inner_iters"] for r in ok])),
                _fmt(_mean([r["time_ms"] for r in ok])),
                _fmt(_mean([r["baseline_outer_iters"] for r in ok])),
                _fmt(_mean([float(r["recovered"]) for r in ok])),
                sum(1 for r in runs if r["d"] == d and r["error"]),
            ])
    return BenchmarkResult(suite, summary_path, runs, failures)
