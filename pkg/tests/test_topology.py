import pytest
import networkx as nx
from hypothesis import given, settings, strategies as st
from fhtw_lite.errors import RejectedInputError
from fhtw_lite.topology import (DirectedEdge, RankBudget, TreeTopology, build_tree_1d, build_tree_2d,
                                interface_variables, subtree_variables)
from fhtw_lite.wavelet import label_index


def _split(tree):
    external = {n for n in tree.nodes if tree.is_external(n)}
    return external, set(tree.nodes) - external


def test_tree_1d_small(tree4):
    external, internal = _split(tree4)
    assert external == {"v(1,-1)", "v(1,0)", "v(1,1)", "v(2,1)"}
    assert internal == {"w(1,0)"}
    assert len(tree4.edges) == 4
    assert tree4.root == "v(1,-1)"
    assert tree4.bonds("w(1,0)") == ["v(1,0)", "v(1,1)", "v(2,1)"]
    assert tree4.variable("v(2,1)") == label_index(2, 1)


def test_tree_1d_counts():
    tree = build_tree_1d(4)
    external, internal = _split(tree)
    assert (len(external), len(internal), len(tree.edges)) == (16, 7, 22)
    assert tree.max_order() == 3

    leaves = {n for n in tree.nodes if not tree.children[n]}
    assert leaves == {f"v({k},3)" for k in range(1, 9)}


def test_tree_2d():
    small = build_tree_2d(1)
    same = build_tree_1d(2)
    assert small.to_dict()["nodes"] == same.to_dict()["nodes"]
    assert small.to_dict()["edges"] == same.to_dict()["edges"]

    tree = build_tree_2d(3)
    external, internal = _split(tree)
    assert (len(external), len(internal)) == (64, 31)

    with pytest.raises(RejectedInputError):
        build_tree_2d(0)


def test_orders(tree4):
    order = tree4.postorder()
    assert order[-1] == tree4.root
    seen = set()
    for n in order:
        assert all(c in seen for c in tree4.children[n])
        seen.add(n)
    for c, p in tree4.edges:
        assert tree4.parent[c] == p


def test_subtree_variables(tree4):
    assert subtree_variables(tree4, DirectedEdge("v(1,-1)", "v(1,0)")) == {0}
    assert subtree_variables(tree4, DirectedEdge("w(1,0)", "v(1,0)")) == {2, 3}
    with pytest.raises(RejectedInputError):
        subtree_variables(tree4, DirectedEdge("v(1,-1)", "v(1,1)"))


@settings(max_examples=20, deadline=None)
@given(L=st.integers(1, 5), data=st.data())
def test_directed_subtrees_partition(L, data):
    tree = build_tree_1d(L)
    c, p = data.draw(st.sampled_from(tree.edges))
    below = subtree_variables(tree, DirectedEdge(c, p))
    above = subtree_variables(tree, DirectedEdge(p, c))
    assert below | above == set(range(tree.d))
    assert not below & above


def test_interface_variables(tree4):
    e = DirectedEdge("w(1,0)", "v(1,0)")
    assert interface_variables(tree4, e, 1) == [2]
    assert set(interface_variables(tree4, e, 10)) == {2, 3}
    assert interface_variables(tree4, DirectedEdge("v(1,-1)", "v(1,0)"), 3) == [0]

    # closest to the cut first
    tree = build_tree_1d(3)
    assert interface_variables(tree, DirectedEdge("v(1,0)", "v(1,-1)"), 2) == [1, 2]

    with pytest.raises(RejectedInputError):
        interface_variables(tree4, e, 0)


def test_roundtrip_and_reroot(tree4):
    back = TreeTopology.from_dict(tree4.to_dict())
    assert back.root == tree4.root and back.edges == tree4.edges and back.kind == tree4.kind

    rerooted = TreeTopology(tree4.graph, "w(1,0)")
    assert rerooted.parent["v(1,0)"] == "w(1,0)"
    assert rerooted.bonds("v(1,0)") == ["w(1,0)", "v(1,-1)"]


def test_rejects_non_trees():
    g = nx.cycle_graph(3)
    for n in g.nodes:
        g.nodes[n].update(kind="external", variable=n)
    with pytest.raises(RejectedInputError):
        TreeTopology(g, 0)


def test_rank_budget(tree4):
    budget = RankBudget.uniform(tree4, 2, overrides={("v(1,0)", "v(1,-1)"): 1})
    assert budget.ranks[("v(1,0)", "v(1,-1)")] == 1
    assert budget.sketch_sizes[("w(1,0)", "v(1,0)")] == 4
    with pytest.raises(RejectedInputError):
        RankBudget.uniform(tree4, 3, r_sketch=3)


@pytest.mark.parametrize("build, L, levels", [(build_tree_1d, 1, 1), (build_tree_1d, 2, 2), (build_tree_1d, 5, 5),
                                              (build_tree_2d, 2, 4)])
def test_node_degrees(build, L, levels):
    tree = build(L)
    degree = dict(tree.graph.degree)
    leaves = {"v(1,-1)"} | {f"v({k},{levels - 1})" for k in range(1, 2 ** (levels - 1) + 1)}
    for n in tree.nodes:
        if not tree.is_external(n):
            assert degree[n] == 3
        else:
            assert degree[n] == (1 if n in leaves else 2)
    assert tree.max_order() <= 3
