"""Training sets for the recourse surrogate.

Investment plans are drawn by Latin hypercube sampling over every
(technology, investment node) pair, repaired to respect the accumulated
capacity limits, and labelled with the exact operating cost of each
operational node.
"""

import csv
import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .optim.model import SolverError
from .power import (
    SHED_COST, InvariantError, InvestmentSolution, NodeOperationalParams, feature_labels,
    solve_operational,
)
from .utils import derive_seed, dumps17, fingerprint, loads17, parallel_map

log = logging.getLogger("mhsp.training")

SPLIT = (0.70, 0.15, 0.15)


def lhs(dim, n, intervals=None, seed=0):
    """Latin hypercube in [0, 1]^dim with one point per stratum per axis."""
    intervals = n if intervals is None else intervals
    if n != intervals:
        raise ValueError(f"sample count {n} must equal the number of intervals {intervals}")
    if dim < 1 or n < 1:
        raise ValueError("dim and n must be positive")
    rng = np.random.default_rng(seed)
    u = rng.random((n, dim))
    strata = np.column_stack([rng.permutation(n) for _ in range(dim)])
    return (strata + u) / n


def project_investments(tree, techs, inv):
    """Shrink contributing builds proportionally wherever x^Acc would exceed its cap.

    Shrinking only lowers capacities elsewhere, so one pass over the
    operational nodes leaves every node feasible.
    """
    inv = np.array(inv, dtype=float)
    inv_nodes = tree.investment_nodes
    for j in tree.operational_nodes:
        for p, t in enumerate(techs):
            cols = [inv_nodes.index(i) for i in tree.active_investments(j, t.lifetime)]
            hist = t.value("hist", j)
            if hist > t.max_acc + 1e-9:
                raise ValueError(f"{t.name}: historical capacity above the cap at node {j}")
            added = inv[p, cols].sum()
            room = t.max_acc - hist
            if added > room and added > 0:
                inv[p, cols] *= room / added
    return inv


def sample_plans(tree, techs, n, seed, intervals=None):
    """``n`` repaired investment plans, each a (P, |Inv|) array."""
    inv_nodes = tree.investment_nodes
    P = len(techs)
    hi = np.array([[t.value("max_inv", i) for i in inv_nodes] for t in techs])
    if not np.all(np.isfinite(hi)):
        raise ValueError("sampling needs finite per-node investment limits")
    unit = lhs(P * len(inv_nodes), n, intervals, seed=derive_seed(seed, "lhs"))
    return [project_investments(tree, techs, unit[k].reshape(P, -1) * hi) for k in range(n)]


@dataclass
class Normalization:
    x_shift: np.ndarray
    x_scale: np.ndarray
    y_shift: float
    y_scale: float

    def x(self, X):
        return (np.asarray(X, float) - self.x_shift) / self.x_scale

    def y(self, y):
        return (np.asarray(y, float) - self.y_shift) / self.y_scale

    def y_inv(self, yn):
        return np.asarray(yn, float) * self.y_scale + self.y_shift

    def x_inv(self, Xn):
        return np.asarray(Xn, float) * self.x_scale + self.x_shift

    def to_dict(self):
        return {"x_shift": self.x_shift.tolist(), "x_scale": self.x_scale.tolist(),
                "y_shift": self.y_shift, "y_scale": self.y_scale}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["x_shift"], float), np.asarray(d["x_scale"], float),
                   float(d["y_shift"]), float(d["y_scale"]))

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim), 0.0, 1.0)


def fit_normalization(X, y):
    """Zero mean, unit (population) variance; constant columns keep scale 1."""
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float)
    if len(y) < 2:
        raise ValueError("normalization needs at least two samples")
    xs = X.std(axis=0)
    flat = xs <= 1e-12 * np.maximum(1.0, np.abs(X.mean(axis=0)))
    if np.any(flat):
        warnings.warn(f"{int(flat.sum())} zero-variance feature(s); scale set to 1", RuntimeWarning)
    xs = np.where(flat, 1.0, xs)
    ys = float(y.std())
    if ys <= 1e-12 * max(1.0, abs(float(y.mean()))):
        warnings.warn("zero-variance target; scale set to 1", RuntimeWarning)
        ys = 1.0
    return Normalization(X.mean(axis=0), xs, float(y.mean()), ys)


@dataclass
class Dataset:
    labels: list
    node_ids: np.ndarray
    sample_index: np.ndarray
    X: np.ndarray
    y: np.ndarray
    split: dict = None  # name -> row indices
    stats: Normalization = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)

    def rows(self, part):
        return self.split[part]

    def subset(self, node):
        """Rows of one operational node, with a split restricted accordingly."""
        keep = np.flatnonzero(self.node_ids == node)
        pos = {r: k for k, r in enumerate(keep)}
        split = None
        if self.split is not None:
            split = {k: np.array([pos[r] for r in v if r in pos], dtype=np.int64) for k, v in self.split.items()}
        return replace(self, node_ids=self.node_ids[keep], sample_index=self.sample_index[keep],
                       X=self.X[keep], y=self.y[keep], split=split, meta=dict(self.meta, node=node))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "sample_index"] + list(self.labels) + ["target"])
            for k in range(len(self.y)):
                w.writerow([int(self.node_ids[k]), int(self.sample_index[k])]
                           + [repr(float(v)) for v in self.X[k]] + [repr(float(self.y[k]))])

    def sidecar(self):
        return {
            "labels": list(self.labels),
            "split": {k: v.tolist() for k, v in (self.split or {}).items()},
            "normalization": self.stats.to_dict() if self.stats else None,
            "meta": self.meta,
        }

    def save(self, csv_path, sidecar_path=None):
        self.to_csv(csv_path)
        sidecar_path = sidecar_path or str(csv_path) + ".json"
        with open(sidecar_path, "w") as fh:
            fh.write(dumps17(self.sidecar()))

    @classmethod
    def load(cls, csv_path, sidecar_path=None):
        with open(csv_path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            rows = [[float(v) for v in row] for row in r]
        arr = np.array(rows).reshape(len(rows), len(header))
        ds = cls(header[2:-1], arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64),
                 arr[:, 2:-1], arr[:, -1])
        sidecar_path = sidecar_path or str(csv_path) + ".json"
        try:
            with open(sidecar_path) as fh:
                side = loads17(fh.read())
        except FileNotFoundError:
            return ds
        if side.get("split"):
            ds.split = {k: np.asarray(v, dtype=np.int64) for k, v in side["split"].items()}
        if side.get("normalization"):
            ds.stats = Normalization.from_dict(side["normalization"])
        ds.meta = side.get("meta", {})
        return ds


def make_split(n, seed, fractions=SPLIT):
    """Disjoint covering train/validation/test row indices."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = max(1, int(round(fractions[0] * n))) if n else 0
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train)
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }


def normalize(dataset):
    """Fit shift/scale on the training rows and attach them to the dataset."""
    rows = dataset.split["train"] if dataset.split is not None else np.arange(len(dataset))
    if len(rows) < 2:
        rows = np.arange(len(dataset))
    return replace(dataset, stats=fit_normalization(dataset.X[rows], dataset.y[rows]))


def _label(job, techs, scenario_sets, shed_cost, method):
    sample, node, params = job
    scen = scenario_sets[node] if isinstance(scenario_sets, dict) else scenario_sets
    try:
        return sample, node, solve_operational(params, techs, scen, shed_cost, method).cost, None
    except (SolverError, InvariantError) as exc:
        return sample, node, None, str(exc)


def generate_training_set(tree, techs, scenario_sets, n_per_node, seed, intervals=None, nodes=None,
                          shed_cost=SHED_COST, method="auto", workers=None):
    """LHS investment plans labelled with exact per-node operating costs.

    Every sample yields one row per participating operational node. Rows are
    ordered by (sample, node), so identical inputs give byte-identical files.
    """
    if n_per_node < 1:
        raise ValueError("n_per_node must be >= 1")
    nodes = list(tree.operational_nodes if nodes is None else nodes)
    plans = sample_plans(tree, techs, n_per_node, seed, intervals)
    jobs = []
    for k, inv in enumerate(plans):
        sol = InvestmentSolution.from_investments(tree, techs, inv)
        for j in nodes:
            jobs.append((k, j, NodeOperationalParams.at_node(tree, j, sol.acc_at(j))))
    results = parallel_map(partial(_label, techs=techs, scenario_sets=scenario_sets,
                                   shed_cost=shed_cost, method=method), jobs, workers)
    feats = {(k, j): p.features() for k, j, p in jobs}
    keep, excluded = [], []
    for k, j, cost, err in results:
        if err is not None:
            log.warning("event=sample_excluded sample=%d node=%d reason=%s", k, j, err)
            excluded.append({"sample": k, "node": j, "reason": err})
        else:
            keep.append((k, j, cost))
    X = np.array([feats[(k, j)] for k, j, _ in keep]).reshape(len(keep), -1)
    ds = Dataset(
        labels=feature_labels(techs),
        node_ids=np.array([j for _, j, _ in keep], dtype=np.int64),
        sample_index=np.array([k for k, _, _ in keep], dtype=np.int64),
        X=X,
        y=np.array([c for _, _, c in keep], dtype=float),
        meta={
            "seed": int(seed),
            "n_per_node": int(n_per_node),
            "nodes": nodes,
            "plans": [p.tolist() for p in plans],
            "excluded": excluded,
        },
    )
    ds.split = make_split(len(ds), derive_seed(seed, "split"))
    ds.meta["fingerprint"] = fingerprint({"X": ds.X, "y": ds.y})
    return normalize(ds) if len(ds) >= 2 else ds
