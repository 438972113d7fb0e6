import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhsp.nn import (
    Network, TrainConfig, TrainingError, gradient_check, loss_and_grads, metrics, parse_arch, train,
)
from mhsp.training_data import Dataset, Normalization, make_split, normalize


def _reference_forward(net, x):
    """Straight-line recursion, written independently of Network.forward."""
    z = [(x[i] - net.norm.x_shift[i]) / net.norm.x_scale[i] for i in range(len(x))]
    for L, (W, b) in enumerate(zip(net.weights, net.biases)):
        nxt = []
        for r in range(W.shape[0]):
            s = b[r]
            for c in range(W.shape[1]):
                s += W[r, c] * z[c]
            nxt.append(s if L == len(net.weights) - 1 else (s if s > 0 else 0.0))
        z = nxt
    return z[0] * net.norm.y_scale + net.norm.y_shift


def _random_net(arch="16-8-4", d=5, seed=0):
    net = Network.init(d, arch, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for b in net.biases:
        b[:] = rng.normal(0, 0.5, size=b.shape)
    return net


def _dataset(X, y, seed=0):
    ds = Dataset([f"x{k}" for k in range(X.shape[1])], np.zeros(len(y), dtype=np.int64),
                 np.arange(len(y)), X, y)
    ds.split = make_split(len(y), seed)
    return normalize(ds)


def test_parse_arch():
    assert parse_arch("16-8-4") == [16, 8, 4]
    assert parse_arch("") == []
    with pytest.raises(ValueError):
        parse_arch("16-0")


def test_zero_weights_give_output_bias():
    net = Network.init(3, "4-2", seed=0)
    for W in net.weights:
        W[:] = 0
    net.biases[-1][:] = 7.5
    assert net.forward(np.array([1.0, -2.0, 3.0])) == 7.5


def test_relu_clamps_identity_chain():
    net = Network([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    assert net.forward(np.array([-3.0])) == 0.0
    assert net.forward(np.array([2.0])) == 2.0


def test_forward_matches_reference_recursion():
    net = _random_net()
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.normal(size=5)
        assert abs(net.forward(x) - _reference_forward(net, x)) <= 1e-10


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        _random_net().forward(np.ones(4))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_piecewise_linear_along_lines(seed):
    net = _random_net(seed=seed % 7)
    rng = np.random.default_rng(seed)
    x, d = rng.normal(size=5), rng.normal(size=5)
    ts = np.linspace(0, 1e-3, 5)
    pats = [tuple(np.concatenate([a > 0 for a in net.preactivations(x + t * d)])) for t in ts]
    vals = np.array([net.forward(x + t * d) for t in ts])
    if len(set(pats)) == 1:
        slopes = np.diff(vals) / np.diff(ts)
        assert np.allclose(slopes, slopes[0], rtol=1e-6, atol=1e-6)


def test_gradient_check_linear():
    net = Network([np.array([[0.3, -1.2, 2.0]])], [np.array([0.1])])
    assert gradient_check(net, np.array([0.5, 1.0, -2.0]), 0.7, eps=1e-5) <= 1e-7


def test_gradient_check_random_net():
    net = _random_net()
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(10):
        x = rng.normal(size=(3, 5))
        dev = gradient_check(net, x, rng.normal(size=3), eps=1e-6)
        if dev is None:
            continue
        checked += 1
        assert dev <= 1e-5
    assert checked >= 5


def test_gradient_check_skips_kink():
    net = Network([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    assert gradient_check(net, np.array([0.0]), 1.0) is None


@pytest.mark.parametrize("arch", ["4", "16-8-4", "32-16-8"])
def test_linear_target_learned(arch):
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 10, size=(2000, 4))
    y = X @ np.array([3.0, -1.0, 0.5, 2.0]) + 40.0
    ds = _dataset(X, y)
    net, hist = train(ds, TrainConfig(arch=arch, epochs=200, seed=1))
    va = ds.split["val"]
    assert metrics(net, X[va], y[va])["R2"] >= 0.999


def test_single_sample_memorised():
    X = np.array([[1.0, 2.0]])
    ds = Dataset(["a", "b"], np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64), X, np.array([5.0]))
    ds.split = {"train": np.array([0]), "val": np.array([], dtype=np.int64), "test": np.array([], dtype=np.int64)}
    ds.stats = Normalization.identity(2)
    net, hist = train(ds, TrainConfig(arch="8", epochs=2000, patience=2000))
    assert hist.train_loss[-1] <= 1e-8
    assert net.forward(X[0]) == pytest.approx(5.0, abs=1e-3)


def test_training_deterministic():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 3))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2
    ds = _dataset(X, y)
    cfg = TrainConfig(arch="8-4", epochs=20, seed=3)
    a, _ = train(ds, cfg)
    b, _ = train(ds, cfg)
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))


def test_divergence_raises():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 3))
    ds = _dataset(X, X.sum(axis=1))
    with pytest.raises(TrainingError):
        train(ds, TrainConfig(arch="64-64", epochs=50, lr=1e6, optimizer="sgd"))


def test_metric_definitions():
    net = Network([np.array([[1.0]])], [np.array([0.0])])
    X = np.array([[1.0], [2.0], [3.0]])
    m = metrics(net, X, X[:, 0])
    assert m == {"MAE": 0.0, "MAPE": 0.0, "R2": 1.0}
    mean_net = Network([np.array([[0.0]])], [np.array([2.0])])
    m = metrics(mean_net, X, X[:, 0])
    assert m["R2"] == pytest.approx(0.0)
    assert m["MAE"] == pytest.approx(2 / 3)
    assert m["MAPE"] == pytest.approx(100 * (1 + 0 + 1 / 3) / 3)
    with pytest.warns(RuntimeWarning):
        m = metrics(net, np.array([[0.0], [2.0]]), np.array([0.0, 1.0]))
    assert m["MAPE"] == pytest.approx(100.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000))
def test_metric_identities(seed):
    rng = np.random.default_rng(seed)
    net = _random_net(arch="4", d=2, seed=seed % 5)
    X = rng.normal(size=(10, 2))
    y = rng.uniform(1, 5, size=10)
    m = metrics(net, X, y)
    assert m["MAE"] >= 0 and m["MAPE"] >= 0 and m["R2"] <= 1


def test_serialisation_bit_faithful(tmp_path):
    net = _random_net()
    net.norm.x_scale[:] = np.pi
    net.save(tmp_path / "n.json")
    back = Network.load(tmp_path / "n.json")
    assert all(np.array_equal(p, q) for p, q in zip(net.params(), back.params()))
    assert np.array_equal(back.norm.x_scale, net.norm.x_scale)
    assert back.to_dict() == net.to_dict()
    assert set(net.to_dict()) == {"format_version", "architecture", "input_labels", "normalization", "layers"}


def test_backprop_matches_batch_loss():
    net = _random_net(arch="6-3", d=4)
    rng = np.random.default_rng(9)
    X, y = rng.normal(size=(7, 4)), rng.normal(size=7)
    loss, _ = loss_and_grads(net, X, y)
    assert loss == pytest.approx(np.mean((net.forward_normalized(X) - y) ** 2))
