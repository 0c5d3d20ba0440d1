"""Command line entry point: ``compprox {solve,prox,bench}``.

Solve manifests are JSON.  Paths inside a manifest are resolved relative
to the manifest's directory.  Example::

    {
      "A": "A.mtx",
      "y": "y.txt",
      "B": {"builder": "groups", "path": "groups.txt"},
      "penalty": {"kind": "group_l2"},
      "reg_weight": 1e-5,
      "solver": {"accelerated": true, "eps": 1e-8},
      "output": {"solution": "x.txt", "trace": "trace.csv"}
    }

``A`` and ``B`` are either a Matrix Market path or a builder object:
``identity`` (``d``), ``fused`` (``d``), ``groups`` (``groups`` as 1-based
index lists, or ``path``; optional ``d``), ``graph`` (``d`` plus ``edges``
or ``path``), ``tree`` (``branching``) and ``matrix`` (``path``).  For a
``group_l2`` penalty the block offsets come from the groups/tree builder
unless given explicitly.

Exit codes: 0 converged, 2 stopped at the iteration cap, 1 input error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path


from . import experiments
from .builders import (
    Graph,
    GroupSystem,
    fused_difference_operator,
    group_selection_operator,
    incidence_operator,
    read_graph,
    read_groups,
    tree_group_system,
)
from .errors import CompProxError, ManifestError
from .fixed_point import prox_composite
from .linalg import LinearOperator, read_matrix, read_vector, write_vector
from .prox import KINDS, ProxPenalty
from .solvers import CompositeProblem, SolverConfig, SquareLoss, solve

__all__ = ["main", "build_parser", "load_manifest", "build_operator", "build_penalty"]

log = logging.getLogger("compprox")

EXIT_OK, EXIT_INPUT, EXIT_CAP = 0, 1, 2
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
BUILDERS = ("identity", "fused", "groups", "graph", "tree", "matrix")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; input errors here are 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _setup_logging():
    level = os.environ.get("COMPOSITE_PROX_LOG", "quiet").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


# manifest helpers -----------------------------------------------------------

def _resolve(base: Path, p, field) -> Path:
    if not isinstance(p, str):
        raise ManifestError(field, "expected a file path")
    path = Path(p)
    if not path.is_absolute():
        path = base / path
    if not path.exists():
        raise ManifestError(field, f"file not found: {path}")
    return path


def _json_arg(text: str, field: str):
    """Parse a JSON string, or read JSON from a file if `text` names one."""
    if os.path.exists(text):
        text = Path(text).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(field, f"invalid JSON ({exc.msg})") from None


def _int(spec, key, field):
    try:
        return int(spec[key])
    except KeyError:
        raise ManifestError(f"{field}.{key}", "missing") from None
    except (TypeError, ValueError):
        raise ManifestError(f"{field}.{key}", "expected an integer") from None


def build_operator(spec, base: Path = Path("."), field="B", d=None):
    """Build an operator from a path or builder object.

    Returns ``(op, offsets)``; offsets are the group block boundaries when
    the builder defines groups, else None.
    """
    if isinstance(spec, str):
        return LinearOperator.from_matrix(read_matrix(_resolve(base, spec, field)), name=spec), None
    if not isinstance(spec, dict):
        raise ManifestError(field, "expected a path or a builder object")
    kind = spec.get("builder")
    if kind not in BUILDERS:
        raise ManifestError(f"{field}.builder", f"expected one of {BUILDERS}, got {kind!r}")
    if kind == "identity":
        n = _int(spec, "d", field) if "d" in spec or d is None else d
        return LinearOperator.identity(n), None
    if kind == "fused":
        n = _int(spec, "d", field) if "d" in spec or d is None else d
        return fused_difference_operator(n), None
    if kind == "matrix":
        return build_operator(spec.get("path"), base, f"{field}.path")
    if kind == "tree":
        gs = tree_group_system(spec.get("branching") or [])
        return group_selection_operator(gs)
    if kind == "groups":
        n = spec.get("d", d)
        if "path" in spec:
            gs = read_groups(_resolve(base, spec["path"], f"{field}.path"), n)
        elif "groups" in spec:
            groups = tuple(tuple(int(i) - 1 for i in g) for g in spec["groups"])
            if n is None:
                n = max(max(g) for g in groups) + 1
            gs = GroupSystem(int(n), groups)
        else:
            raise ManifestError(field, "groups builder needs 'groups' or 'path'")
        return group_selection_operator(gs)
    n = spec.get("d", d)
    if n is None:
        raise ManifestError(f"{field}.d", "missing")
    if "path" in spec:
        g = read_graph(_resolve(base, spec["path"], f"{field}.path"), int(n))
    else:
        g = Graph(int(n), tuple((int(i) - 1, int(j) - 1) for i, j in spec.get("edges", [])))
    return incidence_operator(g), None


def build_penalty(spec, offsets=None, field="penalty") -> ProxPenalty:
    """Penalty from ``{"kind": ..., "weight": ..., ...}``."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict):
        raise ManifestError(field, "expected an object with a 'kind'")
    kind = spec.get("kind")
    if kind not in KINDS:
        raise ManifestError(f"{field}.kind", f"expected one of {sorted(KINDS)}, got {kind!r}")
    weight = float(spec.get("weight", 1.0))
    try:
        if kind == "lp_power":
            return ProxPenalty.lp_power(spec["p"], spec.get("lam", 1.0), weight)
        if kind == "lp_norm":
            return ProxPenalty.lp_norm(spec["p"], spec.get("gamma", 1.0), weight)
        if kind == "group_l2":
            off = spec.get("offsets", offsets)
            if off is None:
                raise ManifestError(f"{field}.offsets", "needed unless B comes from a groups/tree builder")
            return ProxPenalty.group_l2(off, weight)
        if kind == "oi_norm":
            return ProxPenalty.oi_norm(build_penalty(spec.get("inner", "l1"), None, f"{field}.inner"), weight)
        return ProxPenalty(kind, weight)
    except KeyError as exc:
        raise ManifestError(f"{field}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(field, str(exc)) from None


def _solver_config(spec, seed) -> SolverConfig:
    if spec is None:
        spec = {}
    if not isinstance(spec, dict):
        raise ManifestError("solver", "expected an object")
    names = {f.name for f in dataclasses.fields(SolverConfig)}
    unknown = sorted(set(spec) - names)
    if unknown:
        raise ManifestError(f"solver.{unknown[0]}", "unknown setting")
    kw = dict(spec)
    kw.setdefault("seed", seed)
    try:
        return SolverConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ManifestError("solver", str(exc)) from None


def load_manifest(path):
    """Read a solve manifest and return ``(problem, config, outputs)``."""
    path = Path(path)
    if not path.exists():
        raise ManifestError("manifest", f"file not found: {path}")
    try:
        m = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError("manifest", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(m, dict):
        raise ManifestError("manifest", "top level must be an object")
    base = path.parent
    for key in ("A", "y", "penalty"):
        if key not in m:
            raise ManifestError(key, "missing")
    y = read_vector(_resolve(base, m["y"], "y"))
    A, _ = build_operator(m["A"], base, "A", d=y.size)
    B, offsets = build_operator(m.get("B", {"builder": "identity"}), base, "B", d=A.cols)
    if B.cols != A.cols:
        raise ManifestError("B", f"has {B.cols} columns but A has {A.cols}")
    penalty = build_penalty(m["penalty"], offsets)
    try:
        reg = float(m.get("reg_weight", 1.0))
        problem = CompositeProblem(SquareLoss(A, y), penalty, B, reg)
    except (TypeError, ValueError) as exc:
        raise ManifestError("reg_weight" if "reg" in str(exc) else "A", str(exc)) from None
    seed = int(m.get("seed", 0))
    config = _solver_config(m.get("solver"), seed)
    out = m.get("output", {})
    if not isinstance(out, dict):
        raise ManifestError("output", "expected an object")
    outputs = {k: (base / out[k] if not Path(out[k]).is_absolute() else Path(out[k]))
               for k in ("solution", "trace") if k in out}
    return problem, config, outputs


# commands -----------------------------------------------------------------

def cmd_solve(args) -> int:
    problem, config, outputs = load_manifest(args.manifest)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.timing:
        config = dataclasses.replace(config, record_time=True)
    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = {"solution": out_dir / "solution.txt", "trace": out_dir / "trace.csv"}
    x, trace = solve(problem, config)
    if "solution" in outputs:
        write_vector(outputs["solution"], x)
    if "trace" in outputs:
        trace.to_csv(outputs["trace"])
    print(f"objective {trace.best_objective!r} after {trace.iterations} iterations")
    if trace.hit_cap:
        print("stopped at the iteration cap", file=sys.stderr)
        return EXIT_CAP
    return EXIT_OK


def cmd_prox(args) -> int:
    if args.manifest:
        spec = _json_arg(args.manifest, "manifest")
        base = Path(args.manifest).parent if os.path.exists(args.manifest) else Path(".")
    else:
        spec = {}
        base = Path(".")
    if args.penalty in KINDS:
        pen_spec = args.penalty  # bare kind name, default parameters
    else:
        pen_spec = _json_arg(args.penalty, "penalty") if args.penalty else spec.get("penalty")
    op_spec = _json_arg(args.operator, "operator") if args.operator else spec.get("B", {"builder": "identity"})
    x_path = args.x or spec.get("x")
    if pen_spec is None:
        raise ManifestError("penalty", "missing")
    if x_path is None:
        raise ManifestError("x", "missing")
    x = read_vector(_resolve(base, x_path, "x") if not os.path.isabs(str(x_path)) else Path(x_path))
    B, offsets = build_operator(op_spec, base, "B", d=x.size)
    penalty = build_penalty(pen_spec, offsets)
    lam = args.lam if args.lam is not None else spec.get("lam")
    lam = None if lam in (None, "auto") else float(lam)
    u, state = prox_composite(penalty, B, x, lam=lam, kappa=args.kappa, tol=args.tol,
                              max_iter=args.max_iter)
    out = args.out or spec.get("out")
    if out:
        write_vector(out, u)
    else:
        for v in u:
            print(repr(float(v)))
    print(f"inner_iterations {state.iterations}")
    print(f"step_norm {state.step_norm!r}")
    if not state.converged:
        print("fixed point did not converge", file=sys.stderr)
        return EXIT_CAP
    return EXIT_OK


def cmd_bench(args) -> int:
    res = experiments.run_benchmark(
        args.suite,
        sizes=args.sizes,
        repeats=args.repeats,
        out_dir=args.out,
        seed=args.seed if args.seed is not None else 0,
        jobs=args.jobs,
        full_scale=args.full_scale,
        record_time=args.timing,
    )
    print(f"summary written to {res.summary_path}")
    if res.failures:
        print(f"{res.failures} run(s) failed", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="compprox", description="Composite-penalty proximal solvers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve a problem described by a JSON manifest")
    s.add_argument("--manifest", required=True, help="path to the JSON manifest")
    s.add_argument("--out", help="directory for solution.txt and trace.csv (overrides the manifest)")
    s.add_argument("--seed", type=int, help="seed for the spectral estimates")
    s.add_argument("--timing", action="store_true", help="record wall-clock time per iteration")
    s.set_defaults(func=cmd_solve)

    x = sub.add_parser("prox", help="evaluate the prox of a composite penalty")
    x.add_argument("--manifest", help="JSON object or file with penalty, B, x, lam, out")
    x.add_argument("--penalty", help='penalty kind or JSON, e.g. \'{"kind": "l1", "weight": 1}\'')
    x.add_argument("--operator", help="B as a Matrix Market path or a JSON builder object")
    x.add_argument("--x", help="input vector file, one value per line")
    x.add_argument("--lam", help="fixed-point step, or 'auto'")
    x.add_argument("--kappa", type=float, default=0.2, help="averaging weight in [0, 1)")
    x.add_argument("--tol", type=float, default=1e-10, help="stop when the step norm is at most this")
    x.add_argument("--max-iter", type=int, default=1000, help="iteration cap")
    x.add_argument("--out", help="output vector file (default: print)")
    x.set_defaults(func=cmd_prox)

    b = sub.add_parser("bench", help="run a synthetic benchmark suite")
    b.add_argument("suite", help=f"one of {', '.join(experiments.SUITES)}")
    b.add_argument("--sizes", type=int, nargs="+", help="problem sizes (default depends on suite)")
    b.add_argument("--repeats", type=int, default=1, help="random instances per size")
    b.add_argument("--out", default="bench_out", help="output directory")
    b.add_argument("--seed", type=int, help="master seed (default 0)")
    b.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    b.add_argument("--full-scale", action="store_true", help="use the large default sizes")
    b.add_argument("--timing", action="store_true",
                   help="record wall-clock times (makes the CSVs non-reproducible)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench" and args.suite not in experiments.SUITES:
        print(f"compprox: unknown suite {args.suite!r}; choose from {', '.join(experiments.SUITES)}",
              file=sys.stderr)
        return EXIT_INPUT
    if args.command == "prox" and args.lam not in (None, "auto"):
        try:
            args.lam = float(args.lam)
        except ValueError:
            print(f"compprox: --lam must be a number or 'auto', got {args.lam!r}", file=sys.stderr)
            return EXIT_INPUT
    try:
        return args.func(args)
    except (CompProxError, ValueError, OSError) as exc:
        print(f"compprox: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
