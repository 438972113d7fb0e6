import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhsp.power import InvestmentSolution, NodeOperationalParams, solve_operational
from mhsp.training_data import (
    Dataset, fit_normalization, generate_training_set, lhs, make_split, normalize, project_investments,
    sample_plans,
)
from mhsp.tree import build_tree
from instances import short_scenarios, small_techs


def _stratified(points, n):
    for col in points.T:
        counts = np.bincount(np.floor(col * n).astype(int), minlength=n)
        if not np.all(counts == 1):
            return False
    return True


def test_lhs_one_per_quarter():
    pts = np.sort(lhs(1, 4, 4, seed=3)[:, 0])
    for k in range(4):
        assert k / 4 <= pts[k] < (k + 1) / 4


def test_lhs_flat_marginals_50():
    pts = lhs(2, 50, 50, seed=1)
    assert _stratified(pts, 50)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 40), st.integers(0, 10_000))
def test_lhs_stratification_property(dim, n, seed):
    assert _stratified(lhs(dim, n, seed=seed), n)


def test_lhs_seeds_differ():
    a, b = lhs(3, 10, 10, seed=0), lhs(3, 10, 10, seed=1)
    assert _stratified(a, 10) and _stratified(b, 10)
    assert not np.array_equal(np.argsort(a, axis=0), np.argsort(b, axis=0))


def test_lhs_rejects_mismatch():
    with pytest.raises(ValueError):
        lhs(2, 10, intervals=5)


def _tree():
    return build_tree({"branching": [1, 2, 2], "co2_budget_base": 2e6, "co2_price_base": 30.0,
                       "demand_scale": [[1.0], [1.05, 1.15], [1.05, 1.1]]})


def test_projection_restores_caps():
    techs = small_techs()
    tree = _tree()
    inv = np.array([[t.max_inv] * len(tree.investment_nodes) for t in techs]) * 3
    for t in techs:
        t.max_inv = 1e6
    proj = project_investments(tree, techs, inv)
    sol = InvestmentSolution.from_investments(tree, techs, proj)
    for p, t in enumerate(techs):
        assert np.all(sol.acc[p] <= t.max_acc + 1e-9)
    assert np.all(proj >= 0) and np.all(proj <= inv + 1e-12)


def test_sampled_plans_feasible():
    techs = small_techs()
    tree = _tree()
    for inv in sample_plans(tree, techs, 20, seed=5):
        sol = InvestmentSolution.from_investments(tree, techs, inv)
        assert sol.check(tree, techs) <= 1e-9


@pytest.fixture(scope="module")
def dataset():
    techs = small_techs()
    tree = _tree()
    scs = short_scenarios(2, seed=7)
    return tree, techs, scs, generate_training_set(tree, techs, scs, 10, seed=3)


def test_rows_per_node_and_reconstruction(dataset):
    tree, techs, scs, ds = dataset
    assert len(ds) == 10 * len(tree.operational_nodes)
    for j in tree.operational_nodes:
        assert np.count_nonzero(ds.node_ids == j) == 10
    plans = [np.asarray(p) for p in ds.meta["plans"]]
    P = len(techs)
    for row in range(len(ds)):
        sol = InvestmentSolution.from_investments(tree, techs, plans[ds.sample_index[row]])
        assert np.array_equal(ds.X[row, :P], sol.acc_at(ds.node_ids[row]))
        node = tree.node(ds.node_ids[row])
        assert list(ds.X[row, P:]) == [node.demand_scale, node.co2_budget, node.co2_price]
    assert np.all(ds.y >= 0)


def test_target_resolves_identically(dataset):
    tree, techs, scs, ds = dataset
    row = 7
    p = NodeOperationalParams.at_node(tree, int(ds.node_ids[row]), ds.X[row, :len(techs)])
    assert solve_operational(p, techs, scs).cost == pytest.approx(ds.y[row], rel=1e-7)


def test_zero_investment_gives_historical_system():
    techs = small_techs()
    for t in techs:
        t.max_inv = 0.0
    tree = build_tree({"branching": [1], "co2_budget_base": 2e6})
    scs = short_scenarios(2, seed=7)
    ds = generate_training_set(tree, techs, scs, 1, seed=0)
    hist = [t.hist for t in techs]
    assert list(ds.X[0, :4]) == hist
    want = solve_operational(NodeOperationalParams.at_node(tree, 0, hist), techs, scs).cost
    assert ds.y[0] == want


def test_generation_is_byte_identical(dataset, tmp_path):
    tree, techs, scs, ds = dataset
    again = generate_training_set(tree, techs, scs, 10, seed=3)
    ds.save(tmp_path / "a.csv")
    again.save(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv.json").read_bytes() == (tmp_path / "b.csv.json").read_bytes()
    back = Dataset.load(tmp_path / "a.csv")
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)
    assert np.array_equal(back.stats.x_scale, ds.stats.x_scale)
    assert all(np.array_equal(back.split[k], ds.split[k]) for k in ds.split)


def test_split_disjoint_and_covering():
    for n in (1, 2, 7, 50, 650):
        s = make_split(n, seed=n)
        allrows = np.concatenate([s["train"], s["val"], s["test"]])
        assert sorted(allrows.tolist()) == list(range(n))


def test_per_node_subset(dataset):
    tree, techs, scs, ds = dataset
    sub = ds.subset(3)
    assert np.all(sub.node_ids == 3) and len(sub) == 10
    covered = np.concatenate(list(sub.split.values()))
    assert sorted(covered.tolist()) == list(range(10))


def test_normalization_examples():
    with pytest.warns(RuntimeWarning):
        st_ = fit_normalization(np.array([[0.0, 5.0], [2.0, 5.0]]), np.array([1.0, 3.0]))
    assert st_.x(np.array([[0.0, 5.0], [2.0, 5.0]])).tolist() == [[-1.0, 0.0], [1.0, 0.0]]
    assert st_.x_scale[1] == 1.0
    X = np.random.default_rng(0).normal(3, 7, size=(20, 3))
    st2 = fit_normalization(X, X[:, 0])
    assert np.max(np.abs(st2.x_inv(st2.x(X)) - X)) <= 1e-12
    assert np.max(np.abs(st2.y_inv(st2.y(X[:, 0])) - X[:, 0])) <= 1e-12


def test_normalize_uses_train_rows(dataset):
    _, _, _, ds = dataset
    tr = ds.split["train"]
    again = normalize(ds)
    assert again.stats.y_shift == pytest.approx(ds.y[tr].mean())
