"""Capacity-expansion power system: investment master, operational LP, and
deterministic equivalent, all assembled as ``LinearModel`` instances.

Units: capacities in MW, energy in MWh, costs in GBP, emissions in tonnes.
Operational costs are annual expected costs; the master multiplies them by
the stage length ``kappa`` (years), without discounting.

Closed-form sizes (per operational node, per scenario with T periods and n
time slices; G thermal units of which Gr have ramp rate < 1, S storage units):

    variables    T * (G + 3S + 2)
    constraints  T * (1 + S) + 2 * Gr * (T - n)                 fixed capacities
                 T * (1 + S) + 2 * Gr * (T - n) + T * (G + 3S)  capacities as variables
    plus one emission row per node with a finite CO2 budget.

The master adds |P| * (|Inv| + |Ope|) variables and |P| * |Ope| accumulation
rows; the deterministic equivalent is the master plus every node's block in
the variable-capacity form. See ``operational_size`` / ``de_size``.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .optim import OPTIMAL, LinearModel, solve_lp
from .optim.model import SolverError
from .tree import TreeError

log = logging.getLogger("mhsp.power")

SHED_COST = 10_000.0  # GBP/MWh of unserved energy
THERMAL = ("thermal", "ccs-thermal")
KINDS = THERMAL + ("renewable", "storage")

# the emission row is solved against a budget backed off by this much, so the
# reported solution meets the budget to an absolute 1e-6 t despite the LP
# solver's relative feasibility tolerance
BUDGET_BACKOFF_REL = 1e-8
BUDGET_BACKOFF_ABS = 1e-7
INVARIANT_TOL = 1e-6


class PowerModelError(ValueError):
    pass


class InvariantError(RuntimeError):
    pass


def _at(value, node):
    """Per-node parameter lookup: scalar, or mapping keyed by node id."""
    if isinstance(value, dict):
        if node in value:
            return float(value[node])
        if str(node) in value:
            return float(value[str(node)])
        if "default" in value:
            return float(value["default"])
        raise PowerModelError(f"no value for node {node}")
    return float(value)


@dataclass
class Technology:
    name: str
    kind: str
    inv_cost: object = 0.0  # GBP/MW, scalar or per investment node
    fixed_cost: object = 0.0  # GBP/MW/yr, scalar or per operational node
    hist: object = 0.0  # MW installed before the horizon, per operational node
    max_acc: float = float("inf")
    max_inv: object = float("inf")  # per investment node
    lifetime: float = float("inf")  # years
    gen_cost: float = 0.0  # GBP/MWh excluding CO2
    emission: float = 0.0  # t/MWh
    ramp: float = 1.0  # fraction of capacity per hour
    cycle_cost: float = 0.0  # GBP/MWh discharged
    efficiency: float = 1.0
    power_ratio: float = 1.0  # MWh per MW
    profile: str = None  # capacity-factor series name

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PowerModelError(f"{self.name}: unknown class {self.kind!r}")
        if self.kind == "renewable" and not self.profile:
            self.profile = self.name
        for attr in ("max_acc", "lifetime", "gen_cost", "emission", "cycle_cost"):
            if getattr(self, attr) < 0:
                raise PowerModelError(f"{self.name}: {attr} must be nonnegative")
        if not 0 < self.efficiency <= 1:
            raise PowerModelError(f"{self.name}: efficiency must lie in (0, 1]")
        if not 0 < self.ramp <= 1:
            raise PowerModelError(f"{self.name}: ramp rate must lie in (0, 1]")
        if self.power_ratio <= 0:
            raise PowerModelError(f"{self.name}: power ratio must be positive")

    def value(self, attr, node):
        v = _at(getattr(self, attr), node)
        if v < 0:
            raise PowerModelError(f"{self.name}: negative {attr} at node {node}")
        return v

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def load_technologies(path):
    with open(path) as fh:
        doc = json.load(fh)
    return [Technology(**d) for d in doc["technologies"]]


def save_technologies(techs, path):
    from .utils import dumps17

    with open(path, "w") as fh:
        fh.write(dumps17({"technologies": [t.to_dict() for t in techs]}))


# ------------------------------------------------------------ solutions

@dataclass
class InvestmentSolution:
    tech_names: list
    inv_nodes: list
    ope_nodes: list
    inv: np.ndarray  # (P, |Inv|) MW
    acc: np.ndarray  # (P, |Ope|) MW

    def acc_at(self, node):
        return self.acc[:, self.ope_nodes.index(node)]

    def inv_at(self, node):
        return self.inv[:, self.inv_nodes.index(node)]

    @classmethod
    def from_investments(cls, tree, techs, inv):
        """Accumulate ``inv`` (P, |Inv|) into capacities per operational node."""
        inv = np.asarray(inv, dtype=float)
        inv_nodes, ope_nodes = tree.investment_nodes, tree.operational_nodes
        acc = np.zeros((len(techs), len(ope_nodes)))
        for k, j in enumerate(ope_nodes):
            for p, t in enumerate(techs):
                cols = [inv_nodes.index(i) for i in tree.active_investments(j, t.lifetime)]
                acc[p, k] = t.value("hist", j) + inv[p, cols].sum()
        return cls([t.name for t in techs], list(inv_nodes), list(ope_nodes), inv, acc)

    def check(self, tree, techs, tol=1e-6):
        """Largest violation of accumulation, investment and capacity limits."""
        ref = InvestmentSolution.from_investments(tree, techs, self.inv)
        worst = float(np.max(np.abs(ref.acc - self.acc), initial=0.0))
        for p, t in enumerate(techs):
            for k, i in enumerate(self.inv_nodes):
                worst = max(worst, -self.inv[p, k], self.inv[p, k] - t.value("max_inv", i))
            worst = max(worst, float(np.max(self.acc[p] - t.max_acc, initial=-np.inf)))
        return worst

    def to_dict(self):
        return {
            "tech_names": self.tech_names,
            "inv_nodes": self.inv_nodes,
            "ope_nodes": self.ope_nodes,
            "inv": self.inv.tolist(),
            "acc": self.acc.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["tech_names"]), list(d["inv_nodes"]), list(d["ope_nodes"]),
                   np.asarray(d["inv"], dtype=float), np.asarray(d["acc"], dtype=float))


@dataclass
class NodeOperationalParams:
    node: int
    capacity: np.ndarray  # MW per technology (x^Acc at this node)
    demand_scale: float = 1.0
    co2_budget: float = float("inf")
    co2_price: float = 0.0

    def __post_init__(self):
        self.capacity = np.asarray(self.capacity, dtype=float)
        if np.any(self.capacity < 0):
            raise PowerModelError("negative capacity")
        if self.demand_scale <= 0 or self.co2_budget < 0 or self.co2_price < 0:
            raise PowerModelError("invalid node parameters")

    @classmethod
    def at_node(cls, tree, node, capacity):
        n = tree.node(node)
        return cls(node, capacity, n.demand_scale, n.co2_budget, n.co2_price)

    def features(self):
        if not np.isfinite(self.co2_budget):
            raise PowerModelError("an infinite CO2 budget cannot be used as a feature")
        return np.concatenate([self.capacity, [self.demand_scale, self.co2_budget, self.co2_price]])


def feature_labels(techs):
    return [f"acc_{t.name}" for t in techs] + ["demand_scale", "co2_budget", "co2_price"]


# ------------------------------------------------------ operational block

def _stack_scenarios(scenarios, techs):
    probs = np.array([s.probability for s in scenarios], dtype=float)
    if np.any(probs < 0):
        raise PowerModelError("negative scenario probability")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise PowerModelError(f"scenario probabilities sum to {probs.sum()}, expected 1")
    scen, H, W, D, slice_id, first, nxt = [], [], [], [], [], [], []
    cf = {t.profile: [] for t in techs if t.kind == "renewable"}
    offset, sid = 0, 0
    for k, s in enumerate(scenarios):
        s.validate()
        T = s.n_periods
        scen.append(np.full(T, k))
        H.append(s.hours); W.append(s.weights); D.append(s.demand)
        for name in cf:
            if name not in s.cf:
                raise PowerModelError(f"scenario lacks capacity factor series {name!r}")
            v = s.cf[name]
            if np.any(v < 0):
                raise PowerModelError("negative capacity factor")
            cf[name].append(v)
        f = np.zeros(T, dtype=bool)
        nx = np.empty(T, dtype=np.int64)
        sl = np.empty(T, dtype=np.int64)
        for a, b in s.slices:
            f[a] = True
            nx[a:b] = np.arange(a + 1, b + 1)
            nx[b - 1] = a
            sl[a:b] = sid
            sid += 1
        first.append(f); nxt.append(nx + offset); slice_id.append(sl)
        offset += T
    cat = np.concatenate
    return dict(
        probs=probs, scen=cat(scen), H=cat(H).astype(float), W=cat(W).astype(float),
        demand=cat(D).astype(float), slice_id=cat(slice_id), first=cat(first), nxt=cat(nxt),
        cf={k: cat(v).astype(float) for k, v in cf.items()}, n_slices=sid,
    )


@dataclass
class OperationalBlock:
    node: int
    techs: list
    gens: list
    stors: list
    rens: list
    data: dict
    pG: np.ndarray
    pSp: np.ndarray
    pSm: np.ndarray
    q: np.ndarray
    shed: np.ndarray
    gshed: np.ndarray
    unit_cost: dict  # group -> per-period annual cost coefficient arrays
    emission_row: int = None
    co2_budget: float = float("inf")
    scale: float = 1.0

    @property
    def n_periods(self):
        return len(self.data["H"])

    def _period_costs(self, x):
        tot = np.zeros(self.n_periods)
        for key, coef in self.unit_cost.items():
            idx = getattr(self, key)
            tot += (coef * x[idx]).reshape(-1, self.n_periods).sum(axis=0)
        return tot

    def scenario_costs(self, x):
        """Annual operating cost per scenario (not probability weighted)."""
        d = self.data
        return np.bincount(d["scen"], weights=self._period_costs(x), minlength=len(d["probs"]))

    def expected_cost(self, x):
        return float(self.data["probs"] @ self.scenario_costs(x))

    def emissions(self, x):
        d = self.data
        w = d["probs"][d["scen"]] * d["W"] * d["H"]
        return float(sum(self.techs[g].emission * (w @ x[self.pG[k]]) for k, g in enumerate(self.gens)))

    def storage_residual(self, x):
        """Largest |sum_t (eta p+ - p-) H_t| over storage units and slices (MWh)."""
        d = self.data
        worst = 0.0
        for k, s in enumerate(self.stors):
            eta = self.techs[s].efficiency
            net = d["H"] * (eta * x[self.pSp[k]] - x[self.pSm[k]])
            worst = max(worst, float(np.max(np.abs(np.bincount(d["slice_id"], weights=net)))))
        return worst

    def check(self, x, tol=INVARIANT_TOL):
        res = self.storage_residual(x)
        if res > tol:
            raise InvariantError(f"node {self.node}: storage energy balance off by {res:.3g} MWh")
        em = self.emissions(x)
        if em > self.co2_budget + tol:
            raise InvariantError(f"node {self.node}: emissions {em!r} exceed budget {self.co2_budget!r}")
        return res, em

    def dispatch(self, x):
        return {
            "generation": x[self.pG], "charge": x[self.pSp], "discharge": x[self.pSm],
            "level": x[self.q], "shed": x[self.shed], "spill": x[self.gshed],
        }


def add_operational_block(model, params, techs, scenarios, cap_vars=None, scale=1.0,
                          shed_cost=SHED_COST, prefix=None):
    """Append one node's operational problem to ``model``.

    ``cap_vars`` maps technology index -> model variable carrying x^Acc; when
    absent the capacities in ``params`` are used as constants (bounds and
    right-hand sides). The objective is ``scale`` times the expected annual
    operating cost.
    """
    d = _stack_scenarios(scenarios, techs)
    TT = len(d["H"])
    pre = prefix or f"n{params.node}_"
    gens = [k for k, t in enumerate(techs) if t.kind in THERMAL]
    stors = [k for k, t in enumerate(techs) if t.kind == "storage"]
    rens = [k for k, t in enumerate(techs) if t.kind == "renewable"]
    G, S = len(gens), len(stors)
    cap = params.capacity
    var_cap = cap_vars is not None

    def ub_for(k, factor=1.0):
        return np.inf if var_cap else factor * cap[k]

    pG = model.add_vars(pre + "pG", (G, TT), 0.0, np.array([[ub_for(g)] for g in gens]) if G else 0.0)
    pSp = model.add_vars(pre + "pSc", (S, TT), 0.0, np.array([[ub_for(s)] for s in stors]) if S else 0.0)
    pSm = model.add_vars(pre + "pSd", (S, TT), 0.0, np.array([[ub_for(s)] for s in stors]) if S else 0.0)
    q = model.add_vars(pre + "q", (S, TT), 0.0,
                       np.array([[ub_for(s, techs[s].power_ratio)] for s in stors]) if S else 0.0)
    shed = model.add_vars(pre + "shed", TT)
    gshed = model.add_vars(pre + "spill", TT)

    t_all = np.arange(TT)

    # capacity rows when capacities are variables
    if var_cap:
        for group, techs_idx, factor in ((pG, gens, None), (pSp, stors, None), (pSm, stors, None),
                                         (q, stors, "gamma")):
            for k, p in enumerate(techs_idx):
                f = techs[p].power_ratio if factor == "gamma" else 1.0
                rows = np.concatenate([t_all, t_all])
                cols = np.concatenate([group[k], np.full(TT, cap_vars[p])])
                vals = np.concatenate([np.ones(TT), np.full(TT, -f)])
                model.add_constrs(pre + f"cap_{techs[p].name}", TT, rows, cols, vals, "<", 0.0)

    # ramping inside each slice
    inner = np.flatnonzero(~d["first"])
    n_in = len(inner)
    for k, g in enumerate(gens):
        alpha = techs[g].ramp
        if alpha >= 1.0 or n_in == 0:
            continue
        r = np.arange(n_in)
        for sign, tag in ((1.0, "up"), (-1.0, "down")):
            rows = [r, r]
            cols = [pG[k, inner], pG[k, inner - 1]]
            vals = [np.full(n_in, sign), np.full(n_in, -sign)]
            rhs = 0.0
            if var_cap:
                rows.append(r); cols.append(np.full(n_in, cap_vars[g])); vals.append(np.full(n_in, -alpha))
            else:
                rhs = alpha * cap[g]
            model.add_constrs(pre + f"ramp{tag}_{techs[g].name}", n_in, np.concatenate(rows),
                              np.concatenate(cols), np.concatenate(vals), "<", rhs)

    # power balance
    rows, cols, vals = [t_all, t_all], [shed, gshed], [np.ones(TT), -np.ones(TT)]
    for k in range(G):
        rows.append(t_all); cols.append(pG[k]); vals.append(np.ones(TT))
    for k in range(S):
        rows += [t_all, t_all]; cols += [pSm[k], pSp[k]]; vals += [np.ones(TT), -np.ones(TT)]
    rhs = params.demand_scale * d["demand"]
    for r in rens:
        avail = d["cf"][techs[r].profile]
        if var_cap:
            rows.append(t_all); cols.append(np.full(TT, cap_vars[r])); vals.append(avail)
        else:
            rhs = rhs - avail * cap[r]
    model.add_constrs(pre + "balance", TT, np.concatenate(rows), np.concatenate(cols),
                      np.concatenate(vals), "=", rhs)

    # storage level, cyclic inside each slice
    for k, s in enumerate(stors):
        eta = techs[s].efficiency
        rows = np.concatenate([t_all] * 4)
        cols = np.concatenate([q[k, d["nxt"]], q[k], pSp[k], pSm[k]])
        vals = np.concatenate([np.ones(TT), -np.ones(TT), -eta * d["H"], d["H"]])
        model.add_constrs(pre + f"level_{techs[s].name}", TT, rows, cols, vals, "=", 0.0)

    # objective: scale * pi * W * H * unit cost
    w = d["probs"][d["scen"]] * d["W"] * d["H"]
    unit_cost = {}
    if G:
        cg = np.array([[techs[g].gen_cost + params.co2_price * techs[g].emission] for g in gens])
        unit_cost["pG"] = cg * (d["W"] * d["H"])
        model.add_objective(pG.ravel(), (scale * cg * w).ravel())
    if S:
        cs = np.array([[techs[s].cycle_cost] for s in stors])
        unit_cost["pSm"] = cs * (d["W"] * d["H"])
        model.add_objective(pSm.ravel(), (scale * cs * w).ravel())
    unit_cost["shed"] = shed_cost * d["W"] * d["H"]
    model.add_objective(shed, scale * shed_cost * w)

    # expected annual emissions
    em_row = None
    if np.isfinite(params.co2_budget):
        rows = np.zeros(G * TT, dtype=np.int64)
        cols = pG.ravel()
        vals = np.concatenate([techs[g].emission * w for g in gens]) if G else np.zeros(0)
        budget = params.co2_budget
        rhs = budget - BUDGET_BACKOFF_REL * budget - BUDGET_BACKOFF_ABS
        em_row = int(model.add_constrs(pre + "co2", 1, rows, cols, vals, "<", max(rhs, 0.0))[0])

    return OperationalBlock(params.node, techs, gens, stors, rens, d, pG, pSp, pSm, q, shed, gshed,
                            unit_cost, em_row, params.co2_budget, scale)


def build_operational_lp(params, techs, scenarios, shed_cost=SHED_COST):
    m = LinearModel(f"operations_n{params.node}")
    if len(params.capacity) != len(techs):
        raise PowerModelError("capacity vector does not match the technology list")
    block = add_operational_block(m, params, techs, scenarios, shed_cost=shed_cost, prefix="")
    return m, block


@dataclass
class OperationalResult:
    node: int
    cost: float  # expected annual operating cost, GBP
    scenario_costs: np.ndarray
    emissions: float
    storage_residual: float
    report: object
    block: OperationalBlock = field(repr=False)


def solve_operational(params, techs, scenarios, shed_cost=SHED_COST, method="auto", tol=1e-9):
    m, block = build_operational_lp(params, techs, scenarios, shed_cost)
    rep = solve_lp(m, tol=tol, method=method)
    if rep.status != OPTIMAL:
        # load shedding makes every instance feasible and bounded
        raise SolverError(f"operational LP at node {params.node} returned {rep.status}")
    res, em = block.check(rep.x)
    return OperationalResult(params.node, float(rep.objective), block.scenario_costs(rep.x), em, res, rep, block)


def _scenarios_for(scenario_sets, node):
    if isinstance(scenario_sets, dict):
        return scenario_sets[node]
    return scenario_sets


def evaluate_recourse(solution, tree, techs, scenario_sets, shed_cost=SHED_COST, method="auto",
                      details=False):
    """Exact expected annual operating cost per operational node."""
    out = {}
    for j in tree.operational_nodes:
        params = NodeOperationalParams.at_node(tree, j, solution.acc_at(j))
        r = solve_operational(params, techs, _scenarios_for(scenario_sets, j), shed_cost, method)
        out[j] = r if details else r.cost
    return out


# ------------------------------------------------------------- master

@dataclass
class MasterHandles:
    tree: object
    techs: list
    inv: np.ndarray  # (P, |Inv|) variable indices
    acc: np.ndarray  # (P, |Ope|)
    inv_nodes: list
    ope_nodes: list
    acc_rows: np.ndarray = None

    def recourse_weight(self, node):
        return self.tree.kappa * self.tree.node(node).probability

    def acc_vars(self, node):
        return self.acc[:, self.ope_nodes.index(node)]

    def extract(self, x):
        # solver round-off can leave -1e-10 on a zero lower bound
        x = np.asarray(x)
        return InvestmentSolution([t.name for t in self.techs], list(self.inv_nodes), list(self.ope_nodes),
                                  np.maximum(x[self.inv], 0.0), np.maximum(x[self.acc], 0.0))

    def acc_bounds(self, node):
        """Box on x^Acc at ``node`` implied by the master's own limits."""
        lo, hi = np.zeros(len(self.techs)), np.zeros(len(self.techs))
        for p, t in enumerate(self.techs):
            lo[p] = t.value("hist", node)
            reach = lo[p] + sum(t.value("max_inv", i) for i in self.tree.active_investments(node, t.lifetime))
            hi[p] = min(t.max_acc, reach)
        return lo, hi


def build_investment_master(tree, techs, name="master"):
    """Investment LP; callers add the per-node operating-cost terms.

    Objective: sum pi_i C^Inv x^Inv + kappa sum pi_j C^Fix x^Acc, with the hook
    ``recourse_weight(j) = kappa * pi_j`` for each node's operating cost.
    """
    m = LinearModel(name)
    inv_nodes, ope_nodes = tree.investment_nodes, tree.operational_nodes
    P = len(techs)
    inv_ub = np.array([[t.value("max_inv", i) for i in inv_nodes] for t in techs]).reshape(P, len(inv_nodes))
    acc_ub = np.array([[t.max_acc] * len(ope_nodes) for t in techs]).reshape(P, len(ope_nodes))
    inv = m.add_vars("xinv", (P, len(inv_nodes)), 0.0, inv_ub)
    acc = m.add_vars("xacc", (P, len(ope_nodes)), 0.0, acc_ub)

    for k, i in enumerate(inv_nodes):
        pi = tree.node(i).probability
        m.add_objective(inv[:, k], [pi * t.value("inv_cost", i) for t in techs])
    for k, j in enumerate(ope_nodes):
        w = tree.kappa * tree.node(j).probability
        m.add_objective(acc[:, k], [w * t.value("fixed_cost", j) for t in techs])

    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for k, j in enumerate(ope_nodes):
        try:
            tree.investment_ancestors(j)
        except TreeError as exc:
            raise PowerModelError(f"node {j}: {exc}") from exc
        for p, t in enumerate(techs):
            rows.append(r); cols.append(acc[p, k]); vals.append(1.0)
            for i in tree.active_investments(j, t.lifetime):
                rows.append(r); cols.append(inv[p, inv_nodes.index(i)]); vals.append(-1.0)
            rhs.append(t.value("hist", j))
            r += 1
    acc_rows = m.add_constrs("accumulate", r, rows, cols, vals, "=", np.array(rhs))
    return m, MasterHandles(tree, techs, inv, acc, list(inv_nodes), list(ope_nodes), acc_rows)


@dataclass
class DEHandles:
    master: MasterHandles
    blocks: dict  # node -> OperationalBlock

    def operating_cost(self, x):
        """kappa * sum pi_j * c^Ope_j at the given solution."""
        return sum(b.scale * b.expected_cost(x) for b in self.blocks.values())


def build_deterministic_equivalent(tree, techs, scenario_sets, shed_cost=SHED_COST):
    m, mh = build_investment_master(tree, techs, name="deterministic_equivalent")
    blocks = {}
    for j in tree.operational_nodes:
        scen = _scenarios_for(scenario_sets, j)
        if scen is None or len(scen) == 0:
            raise PowerModelError(f"operational node {j} has no scenario set")
        params = NodeOperationalParams.at_node(tree, j, np.zeros(len(techs)))
        cap_vars = {p: int(v) for p, v in enumerate(mh.acc_vars(j))}
        blocks[j] = add_operational_block(m, params, techs, scen, cap_vars=cap_vars,
                                          scale=mh.recourse_weight(j), shed_cost=shed_cost)
    return m, DEHandles(mh, blocks)


@dataclass
class DEResult:
    solution: InvestmentSolution
    objective: float
    operating_cost: float  # kappa-weighted expected operating cost component
    report: object
    handles: DEHandles = field(repr=False)


def solve_deterministic_equivalent(tree, techs, scenario_sets, shed_cost=SHED_COST, method="auto", tol=1e-9):
    m, h = build_deterministic_equivalent(tree, techs, scenario_sets, shed_cost)
    rep = solve_lp(m, tol=tol, method=method)
    if rep.status != OPTIMAL:
        raise SolverError(f"deterministic equivalent returned {rep.status}")
    for b in h.blocks.values():
        b.check(rep.x)
    return DEResult(h.master.extract(rep.x), float(rep.objective), h.operating_cost(rep.x), rep, h)


def investment_cost(solution, tree, techs):
    """Master objective terms: investment plus kappa-weighted fixed costs."""
    total = 0.0
    for k, i in enumerate(solution.inv_nodes):
        pi = tree.node(i).probability
        total += pi * sum(t.value("inv_cost", i) * solution.inv[p, k] for p, t in enumerate(techs))
    for k, j in enumerate(solution.ope_nodes):
        w = tree.kappa * tree.node(j).probability
        total += w * sum(t.value("fixed_cost", j) * solution.acc[p, k] for p, t in enumerate(techs))
    return total


def total_cost(solution, tree, techs, scenario_sets, shed_cost=SHED_COST, method="auto"):
    costs = evaluate_recourse(solution, tree, techs, scenario_sets, shed_cost, method)
    op = sum(tree.kappa * tree.node(j).probability * c for j, c in costs.items())
    return investment_cost(solution, tree, techs) + op, costs


# -------------------------------------------------------------- sizes

def operational_size(techs, scenarios, variable_capacity=False, finite_budget=True):
    G = sum(t.kind in THERMAL for t in techs)
    Gr = sum(t.kind in THERMAL and t.ramp < 1.0 for t in techs)
    S = sum(t.kind == "storage" for t in techs)
    nv = nc = 0
    for s in scenarios:
        T, n = s.n_periods, len(s.slices)
        nv += T * (G + 3 * S + 2)
        nc += T * (1 + S) + 2 * Gr * (T - n)
        if variable_capacity:
            nc += T * (G + 3 * S)
    return nv, nc + int(finite_budget)


def de_size(tree, techs, scenario_sets):
    """Closed-form variable and constraint counts of the deterministic equivalent."""
    P = len(techs)
    nv = P * (len(tree.investment_nodes) + len(tree.operational_nodes))
    nc = P * len(tree.operational_nodes)
    for j in tree.operational_nodes:
        v, c = operational_size(techs, _scenarios_for(scenario_sets, j), True,
                                bool(np.isfinite(tree.node(j).co2_budget)))
        nv += v
        nc += c
    return nv, nc
