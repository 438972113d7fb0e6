"""Desk-scale experiment protocol: sizes, accuracy, timing and stability.

Each study returns plain row dicts; ``write_reports`` turns them into the
CSV files plus a JSON manifest of seeds and fingerprints. Trained networks,
datasets and DE solves are cached per scenario-set size on an ``Experiment``
so the studies can share work.
"""

import csv
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy import stats

from .desk import DeskConfig, desk_scenarios, desk_technologies, desk_tree
from .embed import copy_size
from .nn import Network, TrainConfig, metrics, parse_arch, train
from .power import (
    de_size, evaluate_recourse, feature_labels, investment_cost, solve_deterministic_equivalent,
)
from .surrogate import SurrogateConfig, build_surrogate_master, solve_surrogate, true_cost
from .timeseries import constant_scenarios
from .training_data import Normalization, generate_training_set
from .utils import derive_seed, dumps17, fingerprint

log = logging.getLogger("mhsp.harness")

# reference rows (16-8-4, 32-16-8, 64-32-16) for the size report
REFERENCE_SIZES = {
    "16-8-4": (1643, 336, 1981),
    "32-16-8": (2651, 672, 3325),
    "64-32-16": (4667, 1344, 6013),
}


@dataclass
class ExperimentSpec:
    scenario_sizes: tuple = (5, 10, 15, 20, 50)
    architectures: tuple = ("16-8-4", "32-16-8", "64-32-16")  # accuracy study
    solve_architectures: tuple = ("8",)  # embedded for timing and stability
    samples_per_node: int = 50
    resamples: int = 20
    in_sample_size: int = 5
    oos_scenarios: int = 200
    oos_mode: str = "fresh"  # or "pool": draw every set from one shared pool
    pool_size: int = 450
    constant_series: bool = False  # zero-variance degenerate case
    seed: int = 0
    epochs: int = 500
    gap: float = 0.01
    mode: str = "indicator"
    engine: str = "highs"
    de_method: str = "highs-ipm"
    de_method_alt: str = "highs-ds"  # second timing column; None to skip
    desk: DeskConfig = field(default_factory=DeskConfig)
    workers: int = None

    def __post_init__(self):
        if isinstance(self.desk, dict):
            self.desk = DeskConfig(**self.desk)
        self.scenario_sizes = tuple(int(n) for n in self.scenario_sizes)
        self.architectures = tuple(self.architectures)
        self.solve_architectures = tuple(self.solve_architectures)
        for name in ("resamples", "in_sample_size", "oos_scenarios", "samples_per_node", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if any(n < 1 for n in self.scenario_sizes):
            raise ValueError("scenario sizes must be positive")
        if self.oos_mode not in ("fresh", "pool"):
            raise ValueError("oos_mode must be 'fresh' or 'pool'")
        for a in self.architectures + self.solve_architectures:
            parse_arch(a)

    def to_dict(self):
        d = asdict(self)
        d["scenario_sizes"] = list(self.scenario_sizes)
        d["architectures"] = list(self.architectures)
        d["solve_architectures"] = list(self.solve_architectures)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)

    def fingerprint(self):
        d = self.to_dict()
        d.pop("workers")
        return fingerprint(d)


def summarize(values):
    v = np.asarray(values, float)
    if v.size == 0:
        return {}
    q = np.percentile(v, [0, 25, 50, 75, 100])
    # shifting by the first value keeps identical samples at exactly zero spread
    std = float((v - v[0]).std(ddof=1)) if v.size > 1 else 0.0
    return {"n": int(v.size), "mean": float(v.mean()), "std": std,
            "min": float(q[0]), "q1": float(q[1]), "median": float(q[2]), "q3": float(q[3]), "max": float(q[4])}


def mean_ci(samples, level=0.95):
    """Mean and t-distribution confidence interval."""
    x = np.asarray(samples, float)
    m = float(x.mean())
    if x.size < 2:
        return m, m, m
    half = float(stats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / np.sqrt(x.size))
    return m, m - half, m + half


def scenario_costs(solution, tree, techs, scenarios):
    """Total cost of a fixed first-stage plan under each scenario in turn.

    Every operational node sees the same scenario set; the probability-weighted
    mean of the result is the plan's true cost on that set.
    """
    res = evaluate_recourse(solution, tree, techs, scenarios, details=True)
    per = np.full(len(scenarios), investment_cost(solution, tree, techs))
    for j, r in res.items():
        per += tree.kappa * tree.node(j).probability * np.asarray(r.scenario_costs)
    return per


class Experiment:
    def __init__(self, spec=None):
        self.spec = spec or ExperimentSpec()
        self.tree = desk_tree(self.spec.desk)
        self.techs = desk_technologies()
        self._pool = None
        self.datasets = {}  # (n, tag) -> (dataset, seconds)
        self.networks = {}  # (n, tag, arch) -> (network, train seconds, history)
        self.de = {}  # (n, tag) -> (DEResult, seconds)
        self.plans = {}  # (n, tag, arch) -> (PlanResult, seconds)
        self.scenario_ids = {}  # (n, tag) -> scenario seeds used

    # ------------------------------------------------------------ scenarios
    def _periods(self):
        cfg = self.spec.desk
        return 4 * cfg.block_hours + cfg.peak_hours

    def pool(self):
        if self._pool is None:
            self._pool = desk_scenarios(self.spec.pool_size, derive_seed(self.spec.seed, "pool"), self.spec.desk)
        return self._pool

    def scenarios(self, n, tag="train", k=0, exclude=()):
        """Scenario set of size ``n``; (tag, k) select an independent draw."""
        spec = self.spec
        cfg = spec.desk
        if spec.constant_series:
            scs = constant_scenarios(n, demand=cfg.base_demand, cf=0.3, block_hours=cfg.block_hours,
                                     peak_hours=cfg.peak_hours)
            for i, s in enumerate(scs):
                s.meta = {"seed": f"constant-{tag}-{k}-{i}"}
            return scs
        if spec.oos_mode == "pool":
            pool = self.pool()
            avail = np.array([i for i, s in enumerate(pool) if s.meta["seed"] not in set(exclude)])
            if len(avail) < n:
                raise ValueError(f"scenario pool too small for {n} draws")
            rng = np.random.default_rng(derive_seed(spec.seed, tag, n, k))
            pick = np.sort(rng.choice(avail, size=n, replace=False))
            return [replace(pool[i], probability=1.0 / n) for i in pick]
        scs = desk_scenarios(n, derive_seed(spec.seed, tag, n, k), cfg)
        clash = {s.meta["seed"] for s in scs} & set(exclude)
        if clash:
            raise ValueError(f"scenario seeds reused: {sorted(clash)}")
        return scs

    # ------------------------------------------------------------- building
    def dataset(self, n, scs, tag="train"):
        key = (n, tag)
        if key not in self.datasets:
            t0 = time.perf_counter()
            # sampling seed is fixed: only the scenario draw varies between resamples
            ds = generate_training_set(self.tree, self.techs, scs, self.spec.samples_per_node,
                                       seed=derive_seed(self.spec.seed, "lhs"), workers=self.spec.workers)
            self.datasets[key] = (ds, time.perf_counter() - t0)
        return self.datasets[key]

    def network(self, n, scs, arch, tag="train"):
        key = (n, tag, arch)
        if key not in self.networks:
            ds, _ = self.dataset(n, scs, tag)
            t0 = time.perf_counter()
            net, hist = train(ds, TrainConfig(arch=arch, epochs=self.spec.epochs,
                                              seed=derive_seed(self.spec.seed, "train", arch)))
            self.networks[key] = (net, time.perf_counter() - t0, hist)
        return self.networks[key]

    def solve_de(self, n, scs, tag="train", method=None):
        key = (n, tag, method or self.spec.de_method)
        if key not in self.de:
            t0 = time.perf_counter()
            res = solve_deterministic_equivalent(self.tree, self.techs, scs, method=key[2])
            self.de[key] = (res, time.perf_counter() - t0)
        return self.de[key]

    def surrogate_config(self, arch, **kw):
        s = self.spec
        return SurrogateConfig(arch=arch, mode=s.mode, gap=s.gap, engine=s.engine, **kw)

    def solve_surrogate(self, n, scs, arch, tag="train"):
        key = (n, tag, arch)
        if key not in self.plans:
            net, _, _ = self.network(n, scs, arch, tag)
            t0 = time.perf_counter()
            model, handles = build_surrogate_master(self.tree, self.techs, net, self.surrogate_config(arch))
            plan = solve_surrogate(model, handles)
            self.plans[key] = (plan, time.perf_counter() - t0)
        return self.plans[key]

    def drop(self, tag):
        """Forget cached artifacts of one draw (keeps memory flat across resamples)."""
        for cache in (self.datasets, self.networks, self.de, self.plans):
            for key in [k for k in cache if k[1] == tag]:
                del cache[key]

    # --------------------------------------------------------------- studies
    def sizes(self):
        """Variable/constraint counts of the DE per |Omega| and of each surrogate."""
        rows = []
        T = self._periods()
        for n in self.spec.scenario_sizes:
            scs = constant_scenarios(n, block_hours=self.spec.desk.block_hours,
                                     peak_hours=self.spec.desk.peak_hours)
            nv, nc = de_size(self.tree, self.techs, scs)
            rows.append({"model": "deterministic", "scenarios": n, "periods": T, "architecture": "",
                         "continuous": nv, "binaries": 0, "constraints": nc, "copies": 0,
                         "per_neuron_continuous": "", "per_neuron_constraints": "",
                         "reference": ""})
        labels = feature_labels(self.techs)
        d = len(labels)
        archs = list(dict.fromkeys(list(self.spec.architectures) + list(self.spec.solve_architectures)))
        for parity in (False, True):
            tree = desk_tree(replace(self.spec.desk, parity_roles=parity))
            for arch in archs:
                net = Network.init(d, arch, seed=0, input_labels=labels,
                                   norm=Normalization(np.zeros(d), np.ones(d), 0.0, 1.0))
                for explicit in ((False, True) if parity else (False,)):
                    mode = "bigm" if explicit else self.spec.mode
                    cfg = self.surrogate_config(arch, presolve=False, explicit_preactivation=explicit)
                    cfg.mode = mode
                    model, handles = build_surrogate_master(tree, self.techs, net, cfg)
                    N = sum(parse_arch(arch))
                    one = copy_size(N, mode, explicit)
                    ref = REFERENCE_SIZES.get(arch) if parity and explicit else None
                    rows.append({
                        "model": "surrogate" + ("-parity" if parity else "") + ("-explicit" if explicit else ""),
                        "scenarios": "any", "periods": "", "architecture": arch,
                        "continuous": model.num_vars - model.num_binaries, "binaries": model.num_binaries,
                        "constraints": model.num_constrs, "copies": len(handles.embedded),
                        "per_neuron_continuous": (one["continuous"] - 1) / N,
                        "per_neuron_constraints": (one["constraints"] - 1) / N,
                        "reference": "" if ref is None else "/".join(str(v) for v in ref),
                    })
        return rows

    def accuracy(self, sizes=None):
        rows = []
        for n in sizes or self.spec.scenario_sizes:
            scs = self.scenarios(n)
            ds, data_s = self.dataset(n, scs)
            test = ds.split["test"]
            for arch in self.spec.architectures:
                net, train_s, hist = self.network(n, scs, arch)
                m = metrics(net, ds.X[test], ds.y[test])
                rows.append({"scenarios": n, "architecture": arch, "MAE": m["MAE"], "MAPE": m["MAPE"],
                             "R2": m["R2"], "samples_per_node": self.spec.samples_per_node,
                             "rows": len(ds), "epochs": len(hist.train_loss),
                             "training_seconds": train_s, "data_seconds": data_s})
                log.info("event=accuracy scenarios=%d arch=%s mape=%.4f r2=%.5f", n, arch, m["MAPE"], m["R2"])
        return rows

    def timing(self, sizes=None):
        rows = []
        for n in sizes or self.spec.scenario_sizes:
            scs = self.scenarios(n)
            de, de_s = self.solve_de(n, scs)
            alt_s = ""
            if self.spec.de_method_alt:
                _, alt_s = self.solve_de(n, scs, method=self.spec.de_method_alt)
            _, data_s = self.dataset(n, scs)
            for arch in self.spec.solve_architectures:
                _, train_s, _ = self.network(n, scs, arch)
                plan, solve_s = self.solve_surrogate(n, scs, arch)
                total = train_s + solve_s
                rows.append({"scenarios": n, "architecture": arch, "training_seconds": train_s,
                             "solving_seconds": solve_s, "total_seconds": total,
                             "deterministic_seconds": de_s, "speedup": de_s / total,
                             "deterministic_seconds_alt": alt_s, "data_seconds": data_s,
                             "de_objective": de.objective, "surrogate_objective": plan.objective,
                             "surrogate_gap": plan.report.gap, "surrogate_nodes": plan.report.nodes})
                log.info("event=timing scenarios=%d arch=%s solve=%.2f de=%.2f", n, arch, solve_s, de_s)
        return rows

    def in_sample(self, size=None, resamples=None):
        n = size or self.spec.in_sample_size
        rows = []
        for k in range(resamples or self.spec.resamples):
            tag = f"resample-{k}"
            try:
                scs = self.scenarios(n, "in_sample", k)
                de, de_s = self.solve_de(n, scs, tag, method="highs")
                for arch in self.spec.solve_architectures:
                    plan, solve_s = self.solve_surrogate(n, scs, arch, tag)
                    rows.append({"resample": k, "scenarios": n, "architecture": arch,
                                 "de_objective": de.objective, "surrogate_objective": plan.objective,
                                 "surrogate_true_cost": float(true_cost(plan, self.tree, self.techs, scs)),
                                 "status": "ok", "reason": "", "solving_seconds": solve_s,
                                 "deterministic_seconds": de_s})
            except Exception as exc:  # a failed resample is reported, not fatal
                log.warning("event=resample_failed resample=%d reason=%s", k, exc)
                rows.append({"resample": k, "scenarios": n, "architecture": "", "de_objective": "",
                             "surrogate_objective": "", "surrogate_true_cost": "", "status": "failed",
                             "reason": str(exc), "solving_seconds": "", "deterministic_seconds": ""})
            self.drop(tag)
        return rows

    def out_of_sample(self, sizes=None, sanity=False):
        rows = []
        n_oos = self.spec.oos_scenarios
        for n in sizes or self.spec.scenario_sizes:
            scs = self.scenarios(n)
            used = [s.meta["seed"] for s in scs]
            oos = scs if sanity else self.scenarios(n_oos, "out_of_sample", 0, exclude=used)
            de, _ = self.solve_de(n, scs)
            plans = [("deterministic", "", de.solution)]
            for arch in self.spec.solve_architectures:
                plan, _ = self.solve_surrogate(n, scs, arch)
                plans.append(("surrogate", arch, plan.solution))
            for method, arch, sol in plans:
                per = scenario_costs(sol, self.tree, self.techs, oos)
                mean = float(np.dot([s.probability for s in oos], per))
                _, lo, hi = mean_ci(per)
                rows.append({"scenarios": n, "method": method, "architecture": arch,
                             "oos_scenarios": len(oos), "mean": mean, "ci_low": lo, "ci_high": hi,
                             "std": float(np.std(per, ddof=1)) if len(per) > 1 else 0.0})
        return rows


# ------------------------------------------------------------ module API

def run_accuracy(spec, experiment=None):
    return (experiment or Experiment(spec)).accuracy()


def run_timing(spec, experiment=None):
    return (experiment or Experiment(spec)).timing()


def run_in_sample(spec, experiment=None):
    return (experiment or Experiment(spec)).in_sample()


def run_out_of_sample(spec, experiment=None, sanity=False):
    return (experiment or Experiment(spec)).out_of_sample(sanity=sanity)


def size_report(spec, experiment=None):
    return (experiment or Experiment(spec)).sizes()


def solve_time_noise_test(sweep_seconds, resample_seconds, level=0.95):
    """One-sided F test: does |Omega| add spread to surrogate solve times?

    Compares the variance of log solve times across the scenario-size sweep
    with the variance across resamples at a fixed size (retraining noise).
    Returns (ratio, critical value); the sweep is within noise when
    ratio <= critical value.
    """
    a = np.log(np.asarray(sweep_seconds, float))
    b = np.log(np.asarray(resample_seconds, float))
    ratio = float(a.var(ddof=1) / b.var(ddof=1))
    return ratio, float(stats.f.ppf(level, a.size - 1, b.size - 1))


def in_sample_dispersion(rows):
    ok = [r for r in rows if r["status"] == "ok"]
    de = summarize([r["de_objective"] for r in ok])
    su = summarize([r["surrogate_objective"] for r in ok])
    return de, su


TIMING_KEYS = ("training_seconds", "solving_seconds", "total_seconds", "deterministic_seconds",
               "speedup", "deterministic_seconds_alt", "data_seconds")


def write_csv(path, rows, drop=()):
    if not rows:
        with open(path, "w", newline="") as fh:
            fh.write("")
        return
    keys = [k for k in rows[0] if k not in drop]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, keys, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in keys})


def write_reports(out_dir, spec, reports, timing=True):
    """Write the CSV tables and a manifest; ``reports`` maps name -> rows."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for name, rows in reports.items():
        path = os.path.join(out_dir, f"{name}.csv")
        write_csv(path, rows, drop=() if timing else TIMING_KEYS)
        files[name] = os.path.basename(path)
    manifest = {"spec": spec.to_dict(), "fingerprint": spec.fingerprint(), "artifacts": files,
                "seeds": {"root": spec.seed, "desk_reference": spec.desk.seed}}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        fh.write(dumps17(manifest))
    return files
