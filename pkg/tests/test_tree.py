import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhsp.tree import MultiHorizonTree, StrategicNode, TreeError, build_tree, load_tree


def test_paper_shaped_tree():
    t = build_tree({"branching": [1, 3, 3]})
    assert len(t.nodes) == 13
    assert len(t.leaves) == 9
    for j in t.leaves:
        assert t.node(j).probability == pytest.approx(1 / 9, abs=1e-15)
        assert [t.node(i).stage for i in t.investment_ancestors(j)] == [1, 2, 3]


def test_single_node_tree():
    t = build_tree({"branching": [1]})
    assert len(t.nodes) == 1
    assert t.root.probability == 1.0
    assert t.investment_ancestors(t.root.id) == [t.root.id]


def test_conditional_probabilities():
    t = build_tree({"branching": [1, 2], "probabilities": [[1.0], [0.3, 0.7]]})
    probs = sorted(t.node(j).probability for j in t.leaves)
    assert probs == pytest.approx([0.3, 0.7])
    assert sum(probs) == pytest.approx(1.0, abs=1e-15)


def test_chain_ancestors_skip_non_investment():
    t = build_tree({"branching": [1, 1, 1], "roles": {"2": {"investment": False}}})
    assert t.investment_ancestors(2) == [0, 1]
    t = build_tree({"branching": [1, 1], "roles": {"1": {"operational": False}}})
    with pytest.raises(TreeError):
        t.investment_ancestors(1)
    with pytest.raises(TreeError):
        t.investment_ancestors(99)


def test_node_parameters_compound_along_path():
    t = build_tree({
        "branching": [1, 2, 2],
        "demand_scale": [[1.0], [1.1, 0.9], [1.1, 0.9]],
        "co2_budget_base": 1000.0,
        "co2_budget": [[1.0], 0.5, 0.5],
    })
    leaf = t.node(t.leaves[0])
    assert leaf.demand_scale == pytest.approx(1.21)
    assert leaf.co2_budget == pytest.approx(250.0)
    assert t.root.co2_budget == 1000.0


@pytest.mark.parametrize("probs", [[[1.0], [0.3, 0.6]], [[1.0], [0.5, 0.5, 0.1]]])
def test_bad_conditional_probabilities(probs):
    with pytest.raises(TreeError):
        build_tree({"branching": [1, 2], "probabilities": probs})


def test_structural_errors():
    with pytest.raises(TreeError):
        build_tree({"branching": [2]})
    with pytest.raises(TreeError):  # orphan
        MultiHorizonTree([StrategicNode(0, 1, None, 1.0), StrategicNode(1, 2, 7, 1.0)])
    with pytest.raises(TreeError):  # children do not sum to parent
        MultiHorizonTree([StrategicNode(0, 1, None, 1.0), StrategicNode(1, 2, 0, 0.5)])
    with pytest.raises(TreeError):  # stage gap
        MultiHorizonTree([StrategicNode(0, 1, None, 1.0), StrategicNode(1, 3, 0, 1.0)])
    with pytest.raises(TreeError):
        MultiHorizonTree([StrategicNode(0, 1, None, 1.0, demand_scale=0.0)])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=0, max_size=3))
def test_structure_invariants(tail):
    t = build_tree({"branching": [1] + tail})
    for n in t.nodes:
        kids = t.children(n.id)
        if kids:
            assert abs(sum(t.node(k).probability for k in kids) - n.probability) <= 1e-12
        assert len(t.path(n.id)) == n.stage
    assert sum(t.node(j).probability for j in t.leaves) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 30), st.floats(0, 30), st.sampled_from([2.5, 5.0, 10.0]))
def test_lifetime_filter_monotone(h1, h2, kappa):
    t = build_tree({"branching": [1, 2, 2, 1], "kappa": kappa})
    lo, hi = sorted((h1, h2))
    for j in t.operational_nodes:
        assert set(t.active_investments(j, lo)) <= set(t.active_investments(j, hi))
        assert j in t.active_investments(j, 0.0)


def test_roundtrip_via_file(tmp_path):
    t = build_tree({"branching": [1, 3, 3], "co2_price_base": 50.0})
    p = tmp_path / "tree.json"
    p.write_text(json.dumps({"kappa": t.kappa, "nodes": t.to_dict()["nodes"]}))
    t2 = load_tree(p)
    assert t2.to_dict() == t.to_dict()
