import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from compprox.builders import (
    Graph,
    GroupSystem,
    fused_difference_operator,
    group_selection_operator,
    incidence_operator,
    read_graph,
    read_groups,
    tree_group_system,
    write_graph,
    write_groups,
)
from compprox.errors import DimensionError, InvalidGroupsError
from compprox.prox import ProxPenalty


def test_group_selection_examples():
    B, off = group_selection_operator(GroupSystem(3, ((0, 1, 2),)))
    assert np.array_equal(B.to_dense(), np.eye(3))
    B, off = group_selection_operator(GroupSystem(1, ((0,), (0,))))
    assert B.shape == (2, 1) and np.array_equal(B.apply([7.0]), [7, 7])
    B, off = group_selection_operator(GroupSystem(3, ((0, 1), (1, 2))))
    assert np.array_equal(B.apply([1.0, 2.0, 3.0]), [1, 2, 2, 3])
    assert list(off) == [0, 2, 4]


def test_group_selection_structure(rng):
    groups = ((0, 1, 2), (2, 3), (3, 4, 5), (0, 5))
    gs = GroupSystem(6, groups)
    B, off = group_selection_operator(gs)
    M = B.to_dense()
    assert np.all((M != 0).sum(axis=1) == 1) and np.all(M[M != 0] == 1)
    assert np.array_equal((M != 0).sum(axis=0), gs.membership())
    pen = ProxPenalty.group_l2(off)
    for _ in range(20):
        x = rng.standard_normal(6)
        direct = sum(np.linalg.norm(x[list(g)]) for g in groups)
        assert pen(B.apply(x)) == pytest.approx(direct, abs=1e-12)


def test_group_system_validation():
    with pytest.raises(InvalidGroupsError):
        GroupSystem(3, ((0, 1),))
    with pytest.raises(InvalidGroupsError):
        GroupSystem(3, ((0, 1, 2), ()))
    with pytest.raises(InvalidGroupsError):
        GroupSystem(3, ((0, 1, 3),))
    with pytest.raises(InvalidGroupsError):
        GroupSystem(3, ((0, 0, 1, 2),))


def test_fused_difference_examples():
    B = fused_difference_operator(3)
    assert np.array_equal(B.apply([3.0, 1.0, 4.0]), [2, -3])
    assert np.array_equal(B.apply(np.full(3, 2.5)), [0, 0])
    M = B.to_dense()
    assert np.array_equal(M @ M.T, [[2, -1], [-1, 2]])
    with pytest.raises(DimensionError):
        fused_difference_operator(1)


def test_incidence_examples():
    path = incidence_operator(Graph(3, ((0, 1), (1, 2))))
    assert np.array_equal(path.to_dense(), fused_difference_operator(3).to_dense())
    empty = incidence_operator(Graph(4, ()))
    assert empty.shape == (0, 4)
    assert ProxPenalty.l1()(empty.apply(np.ones(4))) == 0.0
    tri = incidence_operator(Graph(3, ((0, 1), (0, 2), (1, 2))))
    assert np.array_equal(tri.apply([1.0, 0.0, 0.0]), [1, 1, 0])


def test_graph_normalizes_and_validates():
    g = Graph(3, ((2, 0),))
    assert g.edges == ((0, 2),)
    with pytest.raises(ValueError):
        Graph(3, ((1, 1),))
    with pytest.raises(ValueError):
        Graph(3, ((0, 1), (1, 0)))
    with pytest.raises(ValueError):
        Graph(3, ((0, 3),))


def _components(d, edges):
    """Union-find labels."""
    parent = list(range(d))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in edges:
        parent[find(i)] = find(j)
    return [find(i) for i in range(d)]


def test_incidence_kernel_is_componentwise_constant(rng):
    for _ in range(30):
        d = int(rng.integers(2, 9))
        pairs = [(i, j) for i in range(d) for j in range(i + 1, d) if rng.uniform() < 0.3]
        B = incidence_operator(Graph(d, tuple(pairs)))
        comp = np.array(_components(d, pairs))
        vals = rng.standard_normal(d)
        x_const = vals[comp]
        assert np.allclose(B.apply(x_const), 0)
        n_comp = len(set(comp))
        if n_comp < d:
            x = rng.standard_normal(d)
            # a generic vector is not constant on a component with an edge
            assert not np.allclose(B.apply(x), 0)
        A = sp.csr_matrix((np.ones(len(pairs)), ([p[0] for p in pairs], [p[1] for p in pairs])), shape=(d, d))
        assert connected_components(A, directed=False)[0] == n_comp
        # kernel dimension equals the number of components
        if B.rows:
            assert d - np.linalg.matrix_rank(B.to_dense()) == n_comp


def test_tree_examples():
    gs = tree_group_system([2])
    assert gs.groups == ((0, 1, 2), (1,), (2,))
    gs = tree_group_system([1])
    assert gs.groups == ((0, 1), (1,))
    gs = tree_group_system([10, 2, 2])
    assert gs.d == 71 and len(gs.groups) == 71
    # root 71, depth-1 subtrees 7 each, depth-2 subtrees 3 each, leaves 1 each
    assert gs.m == 71 + 10 * 7 + 20 * 3 + 40 * 1 == 241


def test_groups_and_graph_file_round_trip(tmp_path):
    gs = GroupSystem(5, ((0, 1, 2), (2, 3, 4)))
    write_groups(tmp_path / "g.txt", gs)
    assert (tmp_path / "g.txt").read_text() == "1 2 3\n3 4 5\n"
    assert read_groups(tmp_path / "g.txt") == gs
    g = Graph(4, ((0, 1), (2, 3)))
    write_graph(tmp_path / "e.txt", g)
    assert read_graph(tmp_path / "e.txt", 4) == g
