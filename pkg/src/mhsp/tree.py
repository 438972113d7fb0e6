"""Multi-horizon scenario tree of strategic nodes.

Every strategic node carries an investment role and an operational role by
default; either can be switched off per node (``roles`` in the tree spec).
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PROB_TOL = 1e-9


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class StrategicNode:
    id: int
    stage: int  # 1-based
    parent: Optional[int]
    probability: float
    demand_scale: float = 1.0  # multiplier on the demand series
    co2_budget: float = float("inf")  # tonnes per year
    co2_price: float = 0.0  # GBP per tonne
    investment: bool = True
    operational: bool = True


@dataclass
class MultiHorizonTree:
    nodes: list
    kappa: float = 5.0  # years between successive investment stages

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}
        self._children = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            if n.parent is not None:
                if n.parent not in self._by_id:
                    raise TreeError(f"node {n.id} has unknown ancestor {n.parent}")
                self._children[n.parent].append(n.id)
        self.validate()

    # -------------------------------------------------------------- queries
    def node(self, i):
        try:
            return self._by_id[i]
        except KeyError:
            raise TreeError(f"unknown node id {i}") from None

    def children(self, i):
        return list(self._children[self.node(i).id])

    @property
    def ids(self):
        return [n.id for n in self.nodes]

    @property
    def root(self):
        return next(n for n in self.nodes if n.parent is None)

    @property
    def investment_nodes(self):
        return [n.id for n in self.nodes if n.investment]

    @property
    def operational_nodes(self):
        return [n.id for n in self.nodes if n.operational]

    @property
    def leaves(self):
        return [n.id for n in self.nodes if not self._children[n.id]]

    @property
    def num_stages(self):
        return max(n.stage for n in self.nodes)

    def path(self, j):
        """Root-to-``j`` node ids."""
        out = []
        node = self.node(j)
        while node is not None:
            out.append(node.id)
            node = self._by_id.get(node.parent) if node.parent is not None else None
        return out[::-1]

    def investment_ancestors(self, j):
        """Investment nodes on the root path of operational node ``j`` (stage order)."""
        if not self.node(j).operational:
            raise TreeError(f"node {j} is not an operational node")
        return [i for i in self.path(j) if self._by_id[i].investment]

    def active_investments(self, j, lifetime):
        """Ancestors whose capacity is still alive at ``j`` for a given lifetime."""
        sj = self.node(j).stage
        return [
            i for i in self.investment_ancestors(j)
            if self.kappa * (sj - self._by_id[i].stage) <= lifetime
        ]

    # ----------------------------------------------------------- validation
    def validate(self):
        roots = [n for n in self.nodes if n.parent is None]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        root = roots[0]
        if root.stage != 1:
            raise TreeError("root must sit at stage 1")
        if abs(root.probability - 1.0) > PROB_TOL:
            raise TreeError("root probability must be 1")
        if len(self._by_id) != len(self.nodes):
            raise TreeError("duplicate node ids")
        for n in self.nodes:
            if not 0.0 <= n.probability <= 1.0 + PROB_TOL:
                raise TreeError(f"node {n.id} probability outside [0, 1]")
            if n.demand_scale <= 0:
                raise TreeError(f"node {n.id}: demand scale must be positive")
            if n.co2_budget < 0:
                raise TreeError(f"node {n.id}: CO2 budget must be nonnegative")
            if n.parent is not None and self._by_id[n.parent].stage != n.stage - 1:
                raise TreeError(f"node {n.id}: ancestor stage must be own stage - 1")
            kids = self._children[n.id]
            if kids:
                total = sum(self._by_id[k].probability for k in kids)
                if abs(total - n.probability) > PROB_TOL:
                    raise TreeError(
                        f"children of node {n.id} carry probability {total}, expected {n.probability}"
                    )
        # connectivity: every node reaches the root
        for n in self.nodes:
            if self.path(n.id)[0] != root.id:
                raise TreeError(f"node {n.id} is orphaned")
        return self

    def to_dict(self):
        return {
            "kappa": self.kappa,
            "nodes": [
                {
                    "id": n.id, "stage": n.stage, "parent": n.parent,
                    "probability": n.probability, "demand_scale": n.demand_scale,
                    "co2_budget": n.co2_budget, "co2_price": n.co2_price,
                    "investment": n.investment, "operational": n.operational,
                }
                for n in self.nodes
            ],
        }

    @classmethod
    def from_nodes(cls, records, kappa=5.0):
        nodes = [StrategicNode(**r) for r in records]
        return cls(nodes, kappa=kappa)


def _level_values(spec_value, level, child_index, default):
    if spec_value is None:
        return default
    row = spec_value[level]
    if np.isscalar(row):
        return float(row)
    return float(row[child_index])


def build_tree(spec):
    """Build a tree from a staged branching description.

    ``spec`` keys (JSON-compatible):

    - ``branching``: list, ``branching[0]`` must be 1 (the root); entry k is the
      number of children of every node at stage k.
    - ``probabilities``: optional per stage, conditional child probabilities
      (list per stage, indexed by child position); uniform if absent.
    - ``demand_scale`` / ``co2_budget`` / ``co2_price``: optional per stage,
      multiplicative factors per child position, compounding along the path;
      the matching ``*_base`` key gives the root value.
    - ``kappa``: years per stage (default 5).
    - ``roles``: optional mapping node id -> {"investment": bool, "operational": bool}.

    Explicit trees are accepted via a ``nodes`` list (see ``MultiHorizonTree.from_nodes``).
    """
    if "nodes" in spec:
        return MultiHorizonTree.from_nodes(spec["nodes"], kappa=spec.get("kappa", 5.0))
    branching = list(spec["branching"])
    if not branching or branching[0] != 1:
        raise TreeError("branching must start with a single root (branching[0] == 1)")
    if any(b < 1 for b in branching):
        raise TreeError("branching factors must be >= 1")
    probs = spec.get("probabilities")
    if probs is not None:
        for k, row in enumerate(probs):
            if k == 0:
                continue
            if len(row) != branching[k] or abs(sum(row) - 1.0) > PROB_TOL:
                raise TreeError(f"conditional probabilities of stage {k + 1} must have "
                                f"{branching[k]} entries summing to 1")
    roles = {int(k): v for k, v in spec.get("roles", {}).items()}
    bases = {
        "demand_scale": spec.get("demand_scale_base", 1.0),
        "co2_budget": spec.get("co2_budget_base", float("inf")),
        "co2_price": spec.get("co2_price_base", 0.0),
    }
    nodes = []
    frontier = [(None, 1.0, dict(bases))]
    next_id = 0
    for level, width in enumerate(branching):
        new_frontier = []
        for parent, parent_prob, values in frontier:
            for k in range(width):
                cond = 1.0 if level == 0 else _level_values(probs, level, k, 1.0 / width)
                vals = {
                    key: values[key] * _level_values(spec.get(key), level, k, 1.0)
                    for key in bases
                }
                nid = next_id
                next_id += 1
                role = roles.get(nid, {})
                nodes.append(StrategicNode(
                    id=nid, stage=level + 1, parent=parent,
                    probability=parent_prob * cond,
                    demand_scale=vals["demand_scale"],
                    co2_budget=vals["co2_budget"],
                    co2_price=vals["co2_price"],
                    investment=role.get("investment", True),
                    operational=role.get("operational", True),
                ))
                new_frontier.append((nid, parent_prob * cond, vals))
        frontier = new_frontier
    return MultiHorizonTree(nodes, kappa=spec.get("kappa", 5.0))


def load_tree(path):
    with open(path) as fh:
        return build_tree(json.load(fh))
