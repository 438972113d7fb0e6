"""Desk-scale benchmark system.

Five technologies (baseload thermal, peaker, wind, solar, 4-hour battery) on a
13-node three-stage tree with growing demand, tightening CO2 budgets and a
rising CO2 price. Historical capacity covers peak demand on every node so
recourse never needs load shedding, even with zero investment.
"""

from dataclasses import dataclass

from .power import Technology
from .timeseries import sample_scenarios, synth_reference
from .tree import build_tree


@dataclass
class DeskConfig:
    seed: int = 2024
    years: int = 3
    base_demand: float = 1000.0  # MW
    block_hours: int = 12  # per season
    peak_hours: int = 5
    co2_budget: float = 4.9e6  # t/yr at the root
    co2_price: float = 30.0  # GBP/t at the root
    parity_roles: bool = False  # root carries no operational role (12 embedded networks)


def desk_technologies():
    kw = dict(lifetime=40.0)
    return [
        Technology("baseload", "thermal", inv_cost=1.2e6, fixed_cost=3.0e4, hist=1300.0, max_acc=2200.0,
                   max_inv=200.0, gen_cost=30.0, emission=0.45, ramp=0.2, **kw),
        Technology("peaker", "thermal", inv_cost=3.5e5, fixed_cost=9.0e3, hist=700.0, max_acc=1500.0,
                   max_inv=200.0, gen_cost=110.0, emission=0.6, ramp=1.0, **kw),
        Technology("wind", "renewable", inv_cost=1.1e6, fixed_cost=2.8e4, hist=300.0, max_acc=3000.0,
                   max_inv=500.0, **kw),
        Technology("solar", "renewable", inv_cost=5.5e5, fixed_cost=1.2e4, hist=100.0, max_acc=2500.0,
                   max_inv=400.0, **kw),
        Technology("battery", "storage", inv_cost=3.0e5, fixed_cost=8.0e3, hist=0.0, max_acc=1200.0,
                   max_inv=200.0, cycle_cost=2.0, efficiency=0.88, power_ratio=4.0, **kw),
    ]


def desk_tree_spec(config=None):
    """Tree description accepted by ``build_tree`` (and ``load_tree`` as JSON)."""
    cfg = config or DeskConfig()
    spec = {
        "branching": [1, 3, 3],
        "kappa": 5.0,
        "demand_scale_base": 1.0,
        "demand_scale": [[1.0], [1.02, 1.06, 1.10], [1.0, 1.03, 1.06]],
        "co2_budget_base": cfg.co2_budget,
        "co2_budget": [[1.0], [0.97, 0.93, 0.9], [1.0, 0.97, 0.94]],
        "co2_price_base": cfg.co2_price,
        "co2_price": [[1.0], [1.3, 1.6, 2.0], [1.2, 1.4, 1.6]],
    }
    if cfg.parity_roles:
        spec["roles"] = {"0": {"investment": True, "operational": False}}
    return spec


def desk_tree(config=None):
    return build_tree(desk_tree_spec(config))


_REFERENCES = {}


def desk_reference(config=None):
    cfg = config or DeskConfig()
    key = (cfg.seed, cfg.years, cfg.base_demand)
    if key not in _REFERENCES:
        _REFERENCES[key] = synth_reference(cfg.seed, years=cfg.years, base_demand=cfg.base_demand,
                                           renewables=("wind", "solar"))
    return _REFERENCES[key]


def desk_scenarios(n, seed, config=None, series=None):
    """``n`` equiprobable operational scenarios sampled from the reference series."""
    cfg = config or DeskConfig()
    series = desk_reference(cfg) if series is None else series
    return sample_scenarios(series, n, seed, block_hours=cfg.block_hours, peak_hours=cfg.peak_hours)


def desk_instance(n_scenarios=5, seed=0, config=None):
    cfg = config or DeskConfig()
    return desk_tree(cfg), desk_technologies(), desk_scenarios(n_scenarios, seed, cfg)
