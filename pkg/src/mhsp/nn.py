"""Fully connected ReLU regression networks, trained with plain numpy.

The network works on normalized inputs and targets internally; ``forward``
takes and returns physical units.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .training_data import Normalization
from .utils import dumps17, loads17

log = logging.getLogger("mhsp.nn")

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


def parse_arch(arch):
    """'32-16-8' -> [32, 16, 8]; '' -> [] (a purely affine model)."""
    if isinstance(arch, (list, tuple)):
        widths = [int(w) for w in arch]
    else:
        arch = str(arch).strip()
        widths = [int(w) for w in arch.split("-")] if arch else []
    if any(w < 1 for w in widths):
        raise ValueError(f"bad architecture {arch!r}")
    return widths


def relu(a):
    return np.maximum(a, 0.0)


@dataclass
class Network:
    weights: list  # W[l] has shape (out, in)
    biases: list
    input_labels: list = None
    norm: Normalization = None

    def __post_init__(self):
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k}: weight rows and bias length differ")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k}: shape does not chain")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k}: non-finite parameters")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have one unit")
        if self.norm is None:
            self.norm = Normalization.identity(self.n_inputs)
        if self.input_labels is None:
            self.input_labels = [f"x{k}" for k in range(self.n_inputs)]

    @property
    def n_inputs(self):
        return self.weights[0].shape[1]

    @property
    def hidden(self):
        return [W.shape[0] for W in self.weights[:-1]]

    @property
    def architecture(self):
        return "-".join(str(w) for w in self.hidden)

    @classmethod
    def init(cls, n_inputs, arch, seed=0, input_labels=None, norm=None):
        """He-style uniform initialisation, bound sqrt(6 / fan_in), zero biases."""
        rng = np.random.default_rng(seed)
        dims = [n_inputs] + parse_arch(arch) + [1]
        Ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = np.sqrt(6.0 / fan_in)
            Ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(Ws, bs, input_labels, norm)

    # ---------------------------------------------------------- evaluation
    def _check(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} inputs, got {X.shape[1]}")
        return X, single

    def forward_normalized(self, Xn):
        h = np.atleast_2d(Xn)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = relu(h @ W.T + b)
        return (h @ self.weights[-1].T + self.biases[-1])[:, 0]

    def forward(self, X):
        """Prediction in physical units (GBP)."""
        X, single = self._check(X)
        y = self.norm.y_inv(self.forward_normalized(self.norm.x(X)))
        return float(y[0]) if single else y

    def preactivations(self, X):
        """Hidden-layer pre-activations, one (N, width) array per layer."""
        X, single = self._check(X)
        h = self.norm.x(X)
        out = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = h @ W.T + b
            out.append(a[0] if single else a)
            h = relu(a)
        return out

    # -------------------------------------------------------- serialisation
    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "architecture": self.architecture,
            "input_labels": list(self.input_labels),
            "normalization": self.norm.to_dict(),
            "layers": [
                {"rows": int(W.shape[0]), "cols": int(W.shape[1]),
                 "weights": W.ravel().tolist(), "biases": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported network format {d.get('format_version')!r}")
        Ws = [np.asarray(L["weights"], float).reshape(L["rows"], L["cols"]) for L in d["layers"]]
        bs = [np.asarray(L["biases"], float) for L in d["layers"]]
        net = cls(Ws, bs, list(d["input_labels"]), Normalization.from_dict(d["normalization"]))
        if net.architecture != d["architecture"]:
            raise ValueError("architecture string does not match the stored layers")
        return net

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(dumps17(self.to_dict()))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(loads17(fh.read()))

    def params(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self):
        return Network([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                       list(self.input_labels), self.norm)


# -------------------------------------------------------------- training

def loss_and_grads(net, Xn, yn):
    """Mean squared error on normalized data and its parameter gradients."""
    hs, acts = [Xn], []
    h = Xn
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        a = h @ W.T + b
        acts.append(a)
        h = relu(a)
        hs.append(h)
    out = (h @ net.weights[-1].T + net.biases[-1])[:, 0]
    r = out - yn
    n = len(yn)
    loss = float(r @ r / n)
    delta = (2.0 / n) * r[:, None]
    grads = [None] * (2 * len(net.weights))
    for k in range(len(net.weights) - 1, -1, -1):
        grads[2 * k] = delta.T @ hs[k]
        grads[2 * k + 1] = delta.sum(axis=0)
        if k:
            delta = (delta @ net.weights[k]) * (acts[k - 1] > 0)
    return loss, grads


@dataclass
class TrainConfig:
    arch: str = "32-16-8"
    epochs: int = 500
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"  # or "sgd" (with momentum)
    momentum: float = 0.9
    patience: int = 50
    lr_decay: float = 0.5  # learning-rate factor applied on a validation plateau
    plateau: int = 20  # epochs without improvement before decaying
    min_lr: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        parse_arch(self.arch)
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0 or self.patience < 1:
            raise ValueError("training hyperparameters must be positive")
        if not 0 < self.lr_decay <= 1 or self.plateau < 1:
            raise ValueError("lr_decay must lie in (0, 1] and plateau be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    seconds: float = 0.0


def train(dataset, config=None):
    """Minibatch training on the dataset's train rows with early stopping.

    Returns the best-validation network (train loss when there is no
    validation split) and the loss history.
    """
    import time

    config = config or TrainConfig()
    if dataset.stats is None:
        raise ValueError("dataset must be normalized before training")
    t0 = time.perf_counter()
    stats = dataset.stats
    split = dataset.split or {"train": np.arange(len(dataset)), "val": np.array([], dtype=int)}
    tr, va = split["train"], split.get("val", np.array([], dtype=int))
    Xn, yn = stats.x(dataset.X), stats.y(dataset.y)
    Xt, yt = Xn[tr], yn[tr]
    Xv, yv = Xn[va], yn[va]

    net = Network.init(dataset.X.shape[1], config.arch, seed=config.seed,
                       input_labels=list(dataset.labels), norm=stats)
    rng = np.random.default_rng(config.seed + 1)
    params = net.params()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    hist = TrainHistory()
    best, best_loss, since = net.copy(), np.inf, 0
    lr, stale = config.lr, 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(yt))
        for start in range(0, len(yt), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(net, Xt[idx], yt[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch}, step {step}")
            step += 1
            for k, (p, g) in enumerate(zip(params, grads)):
                if config.optimizer == "adam":
                    m1[k] = b1 * m1[k] + (1 - b1) * g
                    m2[k] = b2 * m2[k] + (1 - b2) * g * g
                    mh = m1[k] / (1 - b1 ** step)
                    vh = m2[k] / (1 - b2 ** step)
                    p -= lr * mh / (np.sqrt(vh) + eps)
                else:
                    m1[k] = config.momentum * m1[k] - lr * g
                    p += m1[k]
        tl = loss_and_grads(net, Xt, yt)[0]
        vl = loss_and_grads(net, Xv, yv)[0] if len(yv) else tl
        if not (np.isfinite(tl) and np.isfinite(vl)):
            raise TrainingError(f"loss became non-finite at epoch {epoch} (train={tl}, val={vl})")
        hist.train_loss.append(tl)
        hist.val_loss.append(vl)
        if vl < best_loss:
            improved = vl < best_loss - 1e-4 * abs(best_loss)
            best, best_loss, since, hist.best_epoch = net.copy(), vl, 0, epoch
            stale = 0 if improved else stale + 1
        else:
            since += 1
            stale += 1
            if since >= config.patience:
                break
        if stale >= config.plateau and lr > config.min_lr:
            lr, stale = max(lr * config.lr_decay, config.min_lr), 0
    hist.seconds = time.perf_counter() - t0
    log.info("event=train_done arch=%s epochs=%d best_epoch=%d best_val=%.6g seconds=%.3f",
             config.arch, len(hist.train_loss), hist.best_epoch, best_loss, hist.seconds)
    return best, hist


# --------------------------------------------------------------- metrics

def metrics(net, X, y):
    """MAE (GBP), MAPE (%) and R^2 of the network on physical-unit data."""
    y = np.asarray(y, float)
    if len(y) == 0:
        raise ValueError("metrics need at least one sample")
    pred = np.atleast_1d(net.forward(np.atleast_2d(X)))
    err = pred - y
    mae = float(np.mean(np.abs(err)))
    nz = y != 0
    if not np.all(nz):
        warnings.warn(f"{int((~nz).sum())} zero target(s) excluded from MAPE", RuntimeWarning)
    mape = float(np.mean(np.abs(err[nz]) / np.abs(y[nz])) * 100) if nz.any() else float("nan")
    ss_res = float(err @ err)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else float("nan")
    return {"MAE": mae, "MAPE": mape, "R2": r2}


def gradient_check(net, x, y=0.0, eps=1e-6):
    """Max relative gap between backprop and central differences.

    ``x`` and ``y`` are normalized inputs/targets. Returns None when some
    pre-activation sits within reach of the ReLU kink, where the loss is not
    differentiable.
    """
    if not 1e-8 < eps < 1e-3:
        raise ValueError("eps must lie in (1e-8, 1e-3)")
    Xn = np.atleast_2d(np.asarray(x, float))
    yn = np.atleast_1d(np.asarray(y, float))
    h = Xn
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        a = h @ W.T + b
        reach = eps * 10 * (1 + np.abs(h).sum(axis=1, keepdims=True))
        if np.any(np.abs(a) <= reach):
            return None
        h = relu(a)
    _, grads = loss_and_grads(net, Xn, yn)
    worst = 0.0
    for p, g in zip(net.params(), grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + eps
            lp = loss_and_grads(net, Xn, yn)[0]
            flat[k] = old - eps
            lm = loss_and_grads(net, Xn, yn)[0]
            flat[k] = old
            fd = (lp - lm) / (2 * eps)
            # floor keeps round-off on near-zero gradients from dominating
            scale = max(abs(fd), abs(gflat[k]), 1e-6)
            worst = max(worst, abs(fd - gflat[k]) / scale)
    return worst
