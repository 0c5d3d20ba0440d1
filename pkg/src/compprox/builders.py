"""Structured B operators: group selection, differences, incidence, trees."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, InvalidGroupsError
from .linalg import LinearOperator

__all__ = [
    "GroupSystem",
    "Graph",
    "group_selection_operator",
    "fused_difference_operator",
    "incidence_operator",
    "tree_group_system",
    "read_groups",
    "write_groups",
    "read_graph",
    "write_graph",
]


@dataclass(frozen=True)
class GroupSystem:
    """Index groups (0-based) over ``range(d)`` whose union is everything."""

    d: int
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        norm = []
        seen = np.zeros(self.d, dtype=bool)
        for g in self.groups:
            g = tuple(sorted(int(i) for i in g))
            if not g:
                raise InvalidGroupsError("groups must be nonempty")
            if g[0] < 0 or g[-1] >= self.d:
                raise InvalidGroupsError(f"group index out of range 0..{self.d - 1}")
            if len(set(g)) != len(g):
                raise InvalidGroupsError("duplicate index inside a group")
            seen[list(g)] = True
            norm.append(g)
        if not seen.all():
            missing = np.flatnonzero(~seen)[:5].tolist()
            raise InvalidGroupsError(f"groups do not cover all coordinates, e.g. {missing}")
        object.__setattr__(self, "groups", tuple(norm))

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups], dtype=np.int64)

    @property
    def m(self) -> int:
        return int(self.sizes.sum())

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def membership(self) -> np.ndarray:
        """Number of groups containing each coordinate."""
        counts = np.zeros(self.d, dtype=np.int64)
        for g in self.groups:
            counts[list(g)] += 1
        return counts


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on ``d`` vertices, edges stored with i < j."""

    d: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        norm = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError("self loops are not allowed")
            if i > j:
                i, j = j, i
            if i < 0 or j >= self.d:
                raise ValueError(f"edge ({i}, {j}) out of range")
            norm.append((i, j))
        if len(set(norm)) != len(norm):
            raise ValueError("duplicate edges")
        object.__setattr__(self, "edges", tuple(norm))


def group_selection_operator(gs: GroupSystem) -> tuple[LinearOperator, np.ndarray]:
    """Stacked 0/1 selection matrices, one block of rows per group.

    Returns ``(B, offsets)``; ``B x`` concatenates the restrictions of x to
    each group and `offsets` are the block boundaries in R^m.
    """
    cols = np.concatenate([np.asarray(g, dtype=np.int64) for g in gs.groups])
    m = cols.size
    B = sp.csr_matrix((np.ones(m), cols, np.arange(m + 1)), shape=(m, gs.d))
    op = LinearOperator.from_matrix(B, name="group-selection")
    return op, gs.offsets


def fused_difference_operator(d: int) -> LinearOperator:
    """(d-1) x d first-order difference: ``(Bx)_i = x_i - x_{i+1}``."""
    if d < 2:
        raise DimensionError("difference operator needs d >= 2")
    B = sp.diags([np.ones(d - 1), -np.ones(d - 1)], [0, 1], shape=(d - 1, d), format="csr")
    return LinearOperator.from_matrix(B, name="fused-difference")


def incidence_operator(g: Graph) -> LinearOperator:
    """|E| x d incidence matrix, +1 at the smaller endpoint, -1 at the larger."""
    E = len(g.edges)
    if E == 0:
        return LinearOperator.zeros(0, g.d)
    e = np.asarray(g.edges, dtype=np.int64)
    rows = np.repeat(np.arange(E), 2)
    cols = e.ravel()
    vals = np.tile([1.0, -1.0], E)
    B = sp.csr_matrix((vals, (rows, cols)), shape=(E, g.d))
    return LinearOperator.from_matrix(B, name="incidence")


def tree_group_system(branching) -> GroupSystem:
    """One group per node of a balanced tree: the node's whole subtree.

    Nodes are numbered breadth first from the root (index 0); groups come
    in the same order.
    """
    branching = [int(b) for b in branching]
    if not branching or any(b < 1 for b in branching):
        raise ValueError("branching factors must be a nonempty list of positive counts")
    children: list[list[int]] = [[]]
    level = [0]
    for b in branching:
        nxt = []
        for node in level:
            for _ in range(b):
                children.append([])
                child = len(children) - 1
                children[node].append(child)
                nxt.append(child)
        level = nxt
    n = len(children)
    subtree: list[list[int]] = [[] for _ in range(n)]
    # children always have larger indices, so a reverse sweep sees them first
    for node in range(n - 1, -1, -1):
        s = [node]
        for c in children[node]:
            s.extend(subtree[c])
        subtree[node] = s
    return GroupSystem(n, tuple(tuple(s) for s in subtree))


def read_groups(path, d: int | None = None) -> GroupSystem:
    """One group per line, space-separated 1-based indices."""
    groups = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            groups.append(tuple(int(t) - 1 for t in line.split()))
    if d is None:
        d = max(max(g) for g in groups) + 1
    return GroupSystem(d, tuple(groups))


def write_groups(path, gs: GroupSystem) -> None:
    Path(path).write_text("".join(" ".join(str(i + 1) for i in g) + "\n" for g in gs.groups))


def read_graph(path, d: int) -> Graph:
    """Edge list, one ``i j`` pair (1-based) per line."""
    edges = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            i, j = line.split()
            edges.append((int(i) - 1, int(j) - 1))
    return Graph(d, tuple(edges))


def write_graph(path, g: Graph) -> None:
    Path(path).write_text("".join(f"{i + 1} {j + 1}\n" for i, j in g.edges))
