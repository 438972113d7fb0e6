"""Full desk-scale study: size, accuracy, timing and stability tables.

    python3 scripts/run_experiments.py --out runs/desk            # about 40 minutes
    python3 scripts/run_experiments.py --out runs/quick --quick   # a couple of minutes
"""

import argparse
import logging
import time

from mhsp.harness import Experiment, ExperimentSpec, in_sample_dispersion, write_reports
from mhsp.utils import dumps17


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="two small sizes, few samples and resamples")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")

    if args.quick:
        spec = ExperimentSpec(scenario_sizes=(2, 4), samples_per_node=10, resamples=3, in_sample_size=2,
                              oos_scenarios=20, epochs=200, seed=args.seed)
    else:
        spec = ExperimentSpec(seed=args.seed)
    exp = Experiment(spec)
    reports, seconds = {}, {}
    for name, fn in (("sizes", exp.sizes), ("accuracy", exp.accuracy), ("timing", exp.timing),
                     ("stability_in", exp.in_sample), ("stability_out", exp.out_of_sample)):
        t0 = time.perf_counter()
        reports[name] = fn()
        seconds[name] = time.perf_counter() - t0
        logging.info("study=%s seconds=%.1f", name, seconds[name])
    write_reports(args.out, spec, reports)
    de, su = in_sample_dispersion(reports["stability_in"])
    print(dumps17({"study_seconds": seconds, "in_sample": {"deterministic": de, "surrogate": su}}))


if __name__ == "__main__":
    main()
