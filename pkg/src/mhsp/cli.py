"""Command-line pipeline: ``mhsp <subcommand> [flags]``.

Every subcommand writes its artifacts plus ``<subcommand>.manifest.json``
into ``--out``. Artifacts never contain wall-clock timings; those go to a
separate ``<subcommand>.timing.json`` so reruns are byte-identical.
Flags override values from a ``--config`` JSON file.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .desk import DeskConfig, desk_reference, desk_technologies, desk_tree_spec
from .harness import (
    Experiment, ExperimentSpec, in_sample_dispersion, mean_ci, scenario_costs, write_reports,
)
from .nn import Network, TrainConfig, metrics, train
from .optim import SolverError
from .power import InvestmentSolution, load_technologies, save_technologies, solve_deterministic_equivalent
from .surrogate import ConfigError, SurrogateConfig, build_surrogate_master, solve_surrogate
from .timeseries import ReferenceSeries, load_scenarios, sample_scenarios, save_scenarios, synth_reference
from .training_data import Dataset, generate_training_set
from .tree import build_tree, load_tree
from .utils import dumps17, fingerprint, loads17

log = logging.getLogger("mhsp.cli")

STUDIES = ("sizes", "accuracy", "timing", "stability_in", "stability_out")


class ValidationError(ValueError):
    pass


# ------------------------------------------------------------------ io

def _write(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps17(obj))


def _read(path):
    with open(path) as fh:
        return loads17(fh.read())


def _need(path, what):
    if path is None:
        return None
    if not os.path.exists(path):
        raise ValidationError(f"{what} not found: {path}")
    return path


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    if not os.access(args.out, os.W_OK):
        raise ValidationError(f"output directory not writable: {args.out}")
    return args.out


def _manifest(args, artifacts, extra=None, seconds=None):
    out = _outdir(args)
    doc = {
        "command": args.command,
        "version": __version__,
        "seed": args.seed,
        "options": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command", "verbose", "out")},
        "artifacts": {os.path.basename(p): fingerprint(open(p, "rb").read().decode("utf-8", "replace"))
                      for p in artifacts},
    }
    doc.update(extra or {})
    _write(os.path.join(out, f"{args.command}.manifest.json"), doc)
    if seconds is not None:
        _write(os.path.join(out, f"{args.command}.timing.json"), {"seconds": seconds})


def _tree(args):
    if _need(args.tree, "tree spec"):
        return load_tree(args.tree)
    return build_tree(desk_tree_spec(DeskConfig(parity_roles=args.parity_roles)))


def _techs(args):
    if _need(args.techs, "technology catalog"):
        return load_technologies(args.techs)
    return desk_technologies()


def _scenario_set(args):
    if _need(args.scenario_file, "scenario file"):
        return load_scenarios(args.scenario_file)
    cfg = DeskConfig()
    if _need(args.reference, "reference series"):
        series = ReferenceSeries.from_csv(args.reference)
    else:
        series = desk_reference(cfg)
    return sample_scenarios(series, args.scenarios, args.seed, block_hours=args.block_hours,
                            peak_hours=args.peak_hours)


def _network(path):
    _need(path, "network file")
    return Network.load(path)


def _plan(path):
    _need(path, "plan file")
    doc = _read(path)
    return InvestmentSolution.from_dict(doc.get("solution", doc))


# ----------------------------------------------------------- commands

def cmd_synth_data(args):
    out = _outdir(args)
    series = synth_reference(args.seed, years=args.years, base_demand=args.base_demand,
                             renewables=("wind", "solar"))
    paths = [os.path.join(out, n) for n in ("reference.csv", "technologies.json", "tree.json")]
    series.to_csv(paths[0])
    save_technologies(desk_technologies(), paths[1])
    _write(paths[2], desk_tree_spec(DeskConfig(parity_roles=args.parity_roles)))
    _manifest(args, paths)


def cmd_gen_scenarios(args):
    out = _outdir(args)
    scs = _scenario_set(args)
    path = os.path.join(out, "scenarios.json")
    save_scenarios(scs, path)
    _manifest(args, [path], {"scenario_seeds": [s.meta.get("seed") for s in scs]})


def cmd_gen_training(args):
    out = _outdir(args)
    tree, techs, scs = _tree(args), _techs(args), _scenario_set(args)
    t0 = time.perf_counter()
    ds = generate_training_set(tree, techs, scs, args.samples, seed=args.seed)
    path = os.path.join(out, "dataset.csv")
    ds.save(path)
    _manifest(args, [path, path + ".json"], {"rows": len(ds), "excluded": len(ds.meta["excluded"])},
              seconds=time.perf_counter() - t0)


def cmd_train(args):
    out = _outdir(args)
    _need(args.dataset, "dataset")
    ds = Dataset.load(args.dataset)
    if ds.split is None or ds.stats is None:
        raise ValidationError("dataset sidecar with split and normalization is required")
    t0 = time.perf_counter()
    net, hist = train(ds, TrainConfig(arch=args.arch, epochs=args.epochs, seed=args.seed))
    seconds = time.perf_counter() - t0
    path = os.path.join(out, "network.json")
    net.save(path)
    scores = {p: metrics(net, ds.X[ds.split[p]], ds.y[ds.split[p]]) for p in ("val", "test")
              if len(ds.split.get(p, ())) > 0}
    hpath = os.path.join(out, "training.json")
    _write(hpath, {"train_loss": hist.train_loss, "val_loss": hist.val_loss, "best_epoch": hist.best_epoch,
                   "metrics": scores})
    _manifest(args, [path, hpath], seconds=seconds)


def cmd_solve_de(args):
    out = _outdir(args)
    tree, techs, scs = _tree(args), _techs(args), _scenario_set(args)
    t0 = time.perf_counter()
    res = solve_deterministic_equivalent(tree, techs, scs, method=args.lp_method)
    seconds = time.perf_counter() - t0
    path = os.path.join(out, "de_plan.json")
    _write(path, {"solution": res.solution.to_dict(), "objective": res.objective,
                  "operating_cost": res.operating_cost, "report": res.report.as_dict(timing=False)})
    _manifest(args, [path], seconds=seconds)


def cmd_solve_surrogate(args):
    out = _outdir(args)
    tree, techs = _tree(args), _techs(args)
    net = _network(args.network)
    cfg = SurrogateConfig(arch=net.architecture, mode=args.mode, gap=args.gap, engine=args.engine)
    t0 = time.perf_counter()
    model, handles = build_surrogate_master(tree, techs, net, cfg)
    plan = solve_surrogate(model, handles)
    seconds = time.perf_counter() - t0
    path = os.path.join(out, "surrogate_plan.json")
    _write(path, plan.to_dict(timing=False) | {"meta": {}, "size": handles.manifest()["totals"]})
    _manifest(args, [path], seconds=seconds)


def cmd_evaluate(args):
    out = _outdir(args)
    tree, techs, scs = _tree(args), _techs(args), _scenario_set(args)
    if not args.plan:
        raise ValidationError("at least one --plan is required")
    rows = {}
    for p in args.plan:
        per = scenario_costs(_plan(p), tree, techs, scs)
        mean = float(np.dot([s.probability for s in scs], per))
        _, lo, hi = mean_ci(per)
        rows[os.path.basename(p)] = {"mean": mean, "ci_low": lo, "ci_high": hi, "per_scenario": per.tolist()}
    path = os.path.join(out, "evaluation.json")
    _write(path, {"scenarios": len(scs), "plans": rows})
    _manifest(args, [path])


def _experiment_spec(args):
    d = {}
    if _need(args.config, "config file"):
        with open(args.config) as fh:
            d = json.load(fh)
    overrides = {"seed": args.seed_given, "epochs": args.epochs_given, "gap": args.gap_given,
                 "mode": args.mode_given, "samples_per_node": args.samples_given}
    d.update({k: v for k, v in overrides.items() if v is not None})
    if args.scenarios_given is not None:
        d["scenario_sizes"] = [args.scenarios_given]
        d["in_sample_size"] = args.scenarios_given
    if args.arch_given is not None:
        d["architectures"] = [args.arch_given]
        d["solve_architectures"] = [args.arch_given]
    if args.resamples is not None:
        d["resamples"] = args.resamples
    if args.oos is not None:
        d["oos_scenarios"] = args.oos
    return ExperimentSpec.from_dict(d)


def cmd_report(args):
    out = _outdir(args)
    spec = _experiment_spec(args)
    studies = args.studies.split(",") if args.studies else list(STUDIES)
    unknown = set(studies) - set(STUDIES)
    if unknown:
        raise ValidationError(f"unknown studies {sorted(unknown)}; choose from {STUDIES}")
    exp = Experiment(spec)
    run = {"sizes": exp.sizes, "accuracy": exp.accuracy, "timing": exp.timing,
           "stability_in": exp.in_sample, "stability_out": exp.out_of_sample}
    reports = {name: run[name]() for name in STUDIES if name in studies}
    files = write_reports(out, spec, reports, timing=not args.no_timing)
    extra = {}
    if "stability_in" in reports:
        de, su = in_sample_dispersion(reports["stability_in"])
        extra["in_sample_summary"] = {"deterministic": de, "surrogate": su}
    _manifest(args, [os.path.join(out, f) for f in files.values()], extra)


# -------------------------------------------------------------- parser

def _common(p, defaults):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.add_argument("--config", default=None, help="JSON file with option values; flags take precedence")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(**defaults)


def _instance(p):
    p.add_argument("--tree", help="tree spec JSON (default: desk tree)")
    p.add_argument("--techs", help="technology catalog JSON (default: desk catalog)")
    p.add_argument("--parity-roles", action="store_true", help="desk tree without a root operational role")


def _scenario_flags(p):
    p.add_argument("--scenario-file", help="scenarios JSON (default: sample from the reference series)")
    p.add_argument("--reference", help="reference series CSV (default: desk series)")
    p.add_argument("--scenarios", type=int, default=None)
    p.add_argument("--block-hours", type=int, default=None)
    p.add_argument("--peak-hours", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="mhsp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mhsp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="synthetic reference series plus desk catalog and tree")
    _common(p, {"func": cmd_synth_data})
    p.add_argument("--years", type=int, default=None)
    p.add_argument("--base-demand", type=float, default=None)
    p.add_argument("--parity-roles", action="store_true")

    p = sub.add_parser("gen-scenarios", help="sample operational scenarios")
    _common(p, {"func": cmd_gen_scenarios})
    _scenario_flags(p)

    p = sub.add_parser("gen-training", help="LHS plans labelled with exact recourse costs")
    _common(p, {"func": cmd_gen_training})
    _instance(p)
    _scenario_flags(p)
    p.add_argument("--samples", type=int, default=None, help="LHS samples per node")

    p = sub.add_parser("train", help="fit a ReLU network on a dataset")
    _common(p, {"func": cmd_train})
    p.add_argument("--dataset", required=True)
    p.add_argument("--arch", default=None)
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("solve-de", help="solve the deterministic equivalent LP")
    _common(p, {"func": cmd_solve_de})
    _instance(p)
    _scenario_flags(p)
    p.add_argument("--lp-method", default=None)

    p = sub.add_parser("solve-surrogate", help="solve the master with embedded networks")
    _common(p, {"func": cmd_solve_surrogate})
    _instance(p)
    p.add_argument("--network", required=True)
    p.add_argument("--mode", choices=("indicator", "bigm"), default=None)
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--engine", choices=("highs", "bnb"), default=None)

    p = sub.add_parser("evaluate", help="per-scenario true cost of fixed plans")
    _common(p, {"func": cmd_evaluate})
    _instance(p)
    _scenario_flags(p)
    p.add_argument("--plan", action="append", default=[])

    p = sub.add_parser("report", help="run harness studies and write the CSV tables")
    _common(p, {"func": cmd_report})
    p.add_argument("--scenarios", type=int, default=None, dest="scenarios_given")
    p.add_argument("--arch", default=None, dest="arch_given")
    p.add_argument("--gap", type=float, default=None, dest="gap_given")
    p.add_argument("--epochs", type=int, default=None, dest="epochs_given")
    p.add_argument("--samples", type=int, default=None, dest="samples_given")
    p.add_argument("--mode", choices=("indicator", "bigm"), default=None, dest="mode_given")
    p.add_argument("--resamples", type=int, default=None)
    p.add_argument("--oos", type=int, default=None, help="out-of-sample scenario count")
    p.add_argument("--studies", default=None, help=f"comma list from {','.join(STUDIES)}")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock columns (byte-stable CSVs)")
    return parser


# flag defaults when neither the flag nor the config file sets a value
DEFAULTS = {
    "seed": 0, "scenarios": 5, "block_hours": DeskConfig.block_hours, "peak_hours": DeskConfig.peak_hours,
    "samples": 50, "arch": "32-16-8", "epochs": 500, "lp_method": "auto", "mode": "indicator",
    "gap": 0.01, "engine": "highs", "years": DeskConfig.years, "base_demand": DeskConfig.base_demand,
}


def _apply_config(args):
    """Fill unset flags from the config file, then from DEFAULTS."""
    conf = {}
    if args.config is not None and args.command != "report":
        _need(args.config, "config file")
        with open(args.config) as fh:
            conf = json.load(fh)
        if not isinstance(conf, dict):
            raise ValidationError("config file must hold a JSON object")
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
    if args.command == "report":
        args.seed_given = args.seed
        args.seed = args.seed if args.seed is not None else 0
        return args
    for key, default in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, conf.get(key, default))
    for key, value in conf.items():
        if key not in DEFAULTS and hasattr(args, key) and getattr(args, key) in (None, False, []):
            setattr(args, key, value)
    for key in ("scenarios", "samples", "epochs", "years", "block_hours"):
        if getattr(args, key, 1) is not None and getattr(args, key, 1) < 1:
            raise ValidationError(f"--{key.replace('_', '-')} must be positive")
    if getattr(args, "gap", None) is not None and args.gap < 0:
        raise ValidationError("--gap must be non-negative")
    return args


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # usage errors exit with status 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s %(message)s")
    try:
        _apply_config(args)
        args.func(args)
    except (ValidationError, ConfigError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"mhsp {args.command}: validation error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, RuntimeError) as exc:
        print(f"mhsp {args.command}: solver error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"mhsp {args.command}: io error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
