"""Investment master with embedded recourse networks.

Each participating operational node gets a copy of a trained network whose
capacity inputs are the master's x^Acc variables at that node and whose node
parameters (demand scale, CO2 budget, CO2 price) are fixed constants. The
objective replaces each node's operating cost by the network prediction.
"""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .embed import embed
from .nn import Network
from .optim import GAP_REACHED, OPTIMAL, solve_milp
from .power import (
    SHED_COST, InvestmentSolution, NodeOperationalParams, build_investment_master, feature_labels,
    investment_cost, total_cost,
)
from .utils import fingerprint

log = logging.getLogger("mhsp.surrogate")


class ConfigError(ValueError):
    pass


@dataclass
class SurrogateConfig:
    arch: str = "16-8-4"
    mode: str = "indicator"
    gap: float = 0.01
    per_node: bool = False  # one network per node instead of a shared one
    nodes: list = None  # participating operational nodes (None: all)
    engine: str = "highs"  # "bnb" for the built-in branch-and-bound
    lp_method: str = "auto"
    presolve: bool = True
    explicit_preactivation: bool = False
    time_limit: float = None

    def to_dict(self):
        return asdict(self)


@dataclass
class SurrogateHandles:
    master: object  # MasterHandles
    embedded: dict  # node -> EmbeddedNetwork
    networks: dict  # node -> Network
    config: SurrogateConfig

    def manifest(self):
        per = {j: e.manifest for j, e in self.embedded.items()}
        tot = {k: sum(m[k] for m in per.values()) for k in ("continuous", "binaries", "constraints", "indicators")}
        return {"copies": len(per), "totals": tot, "per_node": per}


@dataclass
class PlanResult:
    solution: InvestmentSolution
    objective: float  # surrogate-predicted total cost
    q_hat: dict  # node -> predicted operating cost
    report: object  # SolveReport
    fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    def to_dict(self, timing=True):
        out = {
            "solution": self.solution.to_dict(),
            "objective": self.objective,
            "q_hat": {str(k): v for k, v in self.q_hat.items()},
            "report": self.report.as_dict(timing=timing),
            "fingerprint": self.fingerprint,
            "meta": self.meta,
        }
        return out


def _resolve_networks(tree, networks, config):
    nodes = list(tree.operational_nodes if config.nodes is None else config.nodes)
    for j in nodes:
        if not tree.node(j).operational:
            raise ConfigError(f"node {j} is not an operational node")
    if isinstance(networks, Network):
        if config.per_node:
            raise ConfigError("per_node=True needs a mapping node -> network")
        return {j: networks for j in nodes}
    nets = {int(k): v for k, v in dict(networks).items()}
    missing = [j for j in nodes if j not in nets]
    if missing:
        raise ConfigError(f"no network for participating node(s) {missing}")
    return {j: nets[j] for j in nodes}


def build_surrogate_master(tree, techs, networks, config=None):
    """Master LP plus one embedded network per participating node.

    Returns (model, handles). Network inputs must follow the feature schema
    ``[acc_<tech>..., demand_scale, co2_budget, co2_price]``.
    """
    config = config or SurrogateConfig()
    nets = _resolve_networks(tree, networks, config)
    labels = feature_labels(techs)
    P = len(techs)
    model, master = build_investment_master(tree, techs, name="surrogate")
    embedded = {}
    for j, net in nets.items():
        if list(net.input_labels) != labels:
            raise ConfigError(f"network inputs {net.input_labels} do not match features {labels}")
        node = tree.node(j)
        if not np.isfinite(node.co2_budget):
            raise ConfigError(f"node {j}: infinite CO2 budget cannot be a network input")
        consts = {P: node.demand_scale, P + 1: node.co2_budget, P + 2: node.co2_price}
        acc = master.acc_vars(j)
        lo, hi = master.acc_bounds(j)
        box_lo = np.concatenate([lo, [consts[P], consts[P + 1], consts[P + 2]]])
        box_hi = np.concatenate([hi, [consts[P], consts[P + 1], consts[P + 2]]])
        # the box also tightens the master's own bounds on x^Acc
        model.set_bounds(acc, lb=np.maximum(model.lb[acc], lo), ub=np.minimum(model.ub[acc], hi))
        e = embed(net, model, list(acc) + [None] * 3, mode=config.mode, fixed=consts,
                  input_box=(box_lo, box_hi), presolve=config.presolve, output_units="normalized",
                  explicit_preactivation=config.explicit_preactivation, prefix=f"nn{j}")
        w = master.recourse_weight(j)
        model.add_objective([e.output], [w * e.out_scale])
        model.obj_constant += w * e.out_shift
        embedded[j] = e
    return model, SurrogateHandles(master, embedded, nets, config)


def solve_surrogate(model, handles, gap=None):
    cfg = handles.config
    gap = cfg.gap if gap is None else gap
    t0 = time.perf_counter()
    kw = {"time_limit": cfg.time_limit} if cfg.time_limit is not None else {}
    if cfg.engine == "bnb":
        rep = solve_milp(model, rel_gap=gap, lp_method=cfg.lp_method, engine="bnb", **kw)
    else:
        rep = solve_milp(model, rel_gap=gap, engine=cfg.engine, **kw)
    elapsed = time.perf_counter() - t0
    if rep.status not in (OPTIMAL, GAP_REACHED):
        raise RuntimeError(f"surrogate master not solved (status {rep.status})")
    sol = handles.master.extract(rep.x)
    q_hat = {j: e.prediction(rep.x) for j, e in handles.embedded.items()}
    log.info("event=surrogate_solved objective=%.10g gap=%.4g nodes=%d seconds=%.3f",
             rep.objective, rep.gap, rep.nodes, elapsed)
    fp = fingerprint({
        "config": cfg.to_dict(),
        "networks": {str(j): n.to_dict() for j, n in handles.networks.items()},
        "tree": handles.master.tree.to_dict(),
        "techs": [t.to_dict() for t in handles.master.techs],
    })
    return PlanResult(sol, float(rep.objective), q_hat, rep, fp, {"seconds": elapsed})


def prediction_gap(plan, handles):
    """Largest |Q_hat_j - forward(features_j)| at the plan."""
    worst = 0.0
    tree = handles.master.tree
    for j, net in handles.networks.items():
        feats = NodeOperationalParams.at_node(tree, j, plan.solution.acc_at(j)).features()
        worst = max(worst, abs(plan.q_hat[j] - net.forward(feats)))
    return worst


def true_cost(plan, tree, techs, scenario_sets, shed_cost=SHED_COST, method="auto"):
    """Total cost of the plan with exact recourse at every operational node."""
    solution = plan.solution if isinstance(plan, PlanResult) else plan
    return total_cost(solution, tree, techs, scenario_sets, shed_cost, method)[0]


def constant_recourse_optimum(tree, techs, betas):
    """Closed form for networks that predict a constant: build nothing, pay fixed costs on history."""
    sol = InvestmentSolution.from_investments(
        tree, techs, np.zeros((len(techs), len(tree.investment_nodes))))
    fixed = sum(tree.kappa * tree.node(j).probability * beta for j, beta in betas.items())
    return investment_cost(sol, tree, techs) + fixed
