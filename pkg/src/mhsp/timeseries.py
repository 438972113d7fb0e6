"""Operational scenario generation from a half-hourly reference series.

A scenario is one randomly chosen year cut into four meteorological seasons;
each season contributes one block of consecutive hours, and a peak block is
centred on the year's highest-demand hour. Blocks are verbatim slices of the
hourly-averaged reference, so temporal correlation is preserved.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .utils import derive_seed, dumps17, loads17

HOURS_PER_YEAR = 8760
STEPS_PER_HOUR = 2
SEASONS = (("DJF", (12, 1, 2)), ("MAM", (3, 4, 5)), ("JJA", (6, 7, 8)), ("SON", (9, 10, 11)))


class ScenarioError(ValueError):
    pass


@dataclass
class ReferenceSeries:
    """Half-hourly records; every labelled year has exactly 365 days."""

    timestamps: np.ndarray  # datetime64[m]
    demand: np.ndarray  # MW
    cf: dict  # renewable name -> capacity factor in [0, 1]

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[m]")
        self.demand = np.asarray(self.demand, dtype=float)
        self.cf = {k: np.asarray(v, dtype=float) for k, v in self.cf.items()}
        n = len(self.timestamps)
        if self.demand.shape != (n,) or any(v.shape != (n,) for v in self.cf.values()):
            raise ScenarioError("series columns must all have one value per timestamp")
        if np.any(self.demand < 0):
            raise ScenarioError("negative demand in reference series")
        for k, v in self.cf.items():
            if np.any(v < 0) or np.any(v > 1):
                raise ScenarioError(f"capacity factor {k} outside [0, 1]")

    @property
    def year_labels(self):
        return self.timestamps.astype("datetime64[Y]").astype(int) + 1970

    @property
    def years(self):
        labels = self.year_labels
        out = []
        for y in np.unique(labels):
            if np.count_nonzero(labels == y) == HOURS_PER_YEAR * STEPS_PER_HOUR:
                out.append(int(y))
        return out

    def hourly_year(self, year):
        """Hourly (pair-averaged) demand, capacity factors and months for one year."""
        mask = self.year_labels == year
        if np.count_nonzero(mask) != HOURS_PER_YEAR * STEPS_PER_HOUR:
            raise ScenarioError(f"year {year} is not a complete 365-day half-hourly year")
        ts = self.timestamps[mask][::STEPS_PER_HOUR]
        demand = self.demand[mask].reshape(-1, STEPS_PER_HOUR).mean(axis=1)
        cf = {k: v[mask].reshape(-1, STEPS_PER_HOUR).mean(axis=1) for k, v in self.cf.items()}
        months = ts.astype("datetime64[M]").astype(int) % 12 + 1
        return demand, cf, months

    def to_csv(self, path):
        names = sorted(self.cf)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", "demand_mw"] + [f"cf_{k}" for k in names])
            ts = np.datetime_as_string(self.timestamps, unit="m")
            for i in range(len(ts)):
                w.writerow([ts[i], repr(float(self.demand[i]))] + [repr(float(self.cf[k][i])) for k in names])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            rows = list(r)
        if header[:2] != ["timestamp", "demand_mw"]:
            raise ScenarioError("reference CSV must start with timestamp,demand_mw")
        names = [h[3:] for h in header[2:]]
        ts = np.array([row[0] for row in rows], dtype="datetime64[m]")
        cols = np.array([[float(v) for v in row[1:]] for row in rows]).reshape(len(rows), -1)
        return cls(ts, cols[:, 0], {n: cols[:, k + 1] for k, n in enumerate(names)})


def _year_timestamps(year):
    start = np.datetime64(f"{year}-01-01T00:00", "m")
    steps = np.arange(366 * 24 * STEPS_PER_HOUR) * np.timedelta64(60 // STEPS_PER_HOUR, "m")
    ts = start + steps
    ts = ts[ts.astype("datetime64[Y]").astype(int) + 1970 == year]
    md = np.datetime_as_string(ts, unit="D")
    keep = np.char.find(md.astype(str), "-02-29") < 0
    return ts[keep]


def synth_reference(seed, years=1, start_year=2015, base_demand=1000.0,
                    seasonal=True, noise=True, renewables=("wind", "solar")):
    """Deterministic synthetic half-hourly demand and capacity factors.

    Demand = base * (1 + seasonal + diurnal + AR(1) noise) with a small
    year-level shift; wind has slow AR(1) variation and a winter bias; solar is
    a clipped daylight arc scaled by season and cloudiness (zero at night).
    """
    if years < 1:
        raise ScenarioError("years must be >= 1")
    rng = np.random.default_rng(derive_seed(seed, "synth_reference"))
    ts = np.concatenate([_year_timestamps(start_year + k) for k in range(years)])
    n = len(ts)
    day = (ts - ts.astype("datetime64[Y]")).astype("timedelta64[m]").astype(float) / 1440.0
    hour = (ts - ts.astype("datetime64[D]")).astype("timedelta64[m]").astype(float) / 60.0
    doy = np.floor(day)
    year_idx = ts.astype("datetime64[Y]").astype(int) + 1970 - start_year

    def ar1(phi, sigma):
        eps = rng.normal(size=n) * sigma
        out = np.empty(n)
        acc = 0.0
        for i in range(n):
            acc = phi * acc + eps[i]
            out[i] = acc
        return out

    seasonal_d = 0.18 * np.cos(2 * np.pi * (doy - 15) / 365) if seasonal else 0.0
    diurnal = 0.12 * np.cos(2 * np.pi * (hour - 18) / 24) + 0.05 * np.cos(4 * np.pi * (hour - 9) / 24)
    level = (1 + 0.03 * rng.normal(size=years))[year_idx] if noise else 1.0
    demand_noise = ar1(0.97, 0.012) if noise else 0.0
    demand = base_demand * level * (1 + seasonal_d + diurnal + demand_noise)
    demand = np.maximum(demand, 0.0)

    cf = {}
    if "wind" in renewables:
        w = 0.35 + (0.10 * np.cos(2 * np.pi * (doy - 15) / 365) if seasonal else 0.0)
        if noise:
            w = w + ar1(0.995, 0.03)
        cf["wind"] = np.clip(w, 0.0, 1.0)
    if "solar" in renewables:
        arc = np.clip(np.sin(np.pi * (hour - 6) / 12), 0.0, None)
        arc[(hour < 6) | (hour > 18)] = 0.0
        amp = 0.55 + (0.30 * np.cos(2 * np.pi * (doy - 172) / 365) if seasonal else 0.0)
        cloud = 1 - 0.5 * np.clip(0.5 + ar1(0.98, 0.08), 0, 1) if noise else 1.0
        cf["solar"] = np.clip(arc * amp * cloud, 0.0, 1.0)
    for name in renewables:
        if name not in cf:
            cf[name] = np.clip(0.3 + (ar1(0.99, 0.03) if noise else 0.0), 0, 1)
    return ReferenceSeries(ts, demand, cf)


@dataclass
class OperationalScenario:
    probability: float
    hours: np.ndarray  # H_t
    weights: np.ndarray  # W_t
    demand: np.ndarray  # MW
    cf: dict
    slices: list  # [(start, stop)] contiguous, covering all periods
    slice_kinds: list  # "regular" | "peak"
    meta: dict = field(default_factory=dict)

    @property
    def n_periods(self):
        return len(self.demand)

    def slice_index(self):
        out = np.empty(self.n_periods, dtype=np.int64)
        for k, (a, b) in enumerate(self.slices):
            out[a:b] = k
        return out

    def validate(self):
        T = self.n_periods
        if not (self.hours.shape == self.weights.shape == (T,)):
            raise ScenarioError("hours/weights must have one entry per period")
        covered = np.zeros(T, dtype=int)
        for a, b in self.slices:
            covered[a:b] += 1
        if np.any(covered != 1):
            raise ScenarioError("each period must belong to exactly one slice")
        if self.probability < 0:
            raise ScenarioError("negative scenario probability")
        for k, v in self.cf.items():
            if v.shape != (T,) or np.any(v < 0) or np.any(v > 1):
                raise ScenarioError(f"capacity factor {k} invalid")
        return self

    def to_dict(self):
        return {
            "probability": self.probability,
            "hours": self.hours.tolist(),
            "weights": self.weights.tolist(),
            "demand": self.demand.tolist(),
            "cf": {k: v.tolist() for k, v in self.cf.items()},
            "slices": [list(s) for s in self.slices],
            "slice_kinds": list(self.slice_kinds),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            probability=float(d["probability"]),
            hours=np.asarray(d["hours"], dtype=float),
            weights=np.asarray(d["weights"], dtype=float),
            demand=np.asarray(d["demand"], dtype=float),
            cf={k: np.asarray(v, dtype=float) for k, v in d["cf"].items()},
            slices=[tuple(s) for s in d["slices"]],
            slice_kinds=list(d["slice_kinds"]),
            meta=d.get("meta", {}),
        )


def annualization_weights(scenario, hours_per_year=HOURS_PER_YEAR):
    """W_t: peak periods represent themselves, regular periods share the rest."""
    W = np.ones(scenario.n_periods)
    regular = np.zeros(scenario.n_periods, dtype=bool)
    for (a, b), kind in zip(scenario.slices, scenario.slice_kinds):
        regular[a:b] = kind != "peak"
    peak_hours = scenario.hours[~regular].sum()
    reg_hours = scenario.hours[regular].sum()
    if reg_hours > 0:
        W[regular] = (hours_per_year - peak_hours) / reg_hours
    return W


def _segments(mask):
    """Contiguous True runs of a boolean mask as (start, stop) pairs."""
    d = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def sample_scenario(series, seed, block_hours=96, peak_hours=25, n_peaks=1):
    rng = np.random.default_rng(seed)
    years = series.years
    if not years:
        raise ScenarioError("reference series has no complete year")
    year = years[int(rng.integers(len(years)))]
    demand, cf, months = series.hourly_year(year)

    starts, slices, kinds = [], [], []
    pieces_d, pieces_cf = [], {k: [] for k in cf}
    pos = 0
    for name, season_months in SEASONS:
        mask = np.isin(months, season_months)
        valid = []
        for a, b in _segments(mask):
            if b - a >= block_hours:
                valid.extend(range(a, b - block_hours + 1))
        if not valid:
            raise ScenarioError(f"season {name} shorter than block length {block_hours}")
        s = int(valid[int(rng.integers(len(valid)))])
        starts.append(s)
        pieces_d.append(demand[s:s + block_hours])
        for k in cf:
            pieces_cf[k].append(cf[k][s:s + block_hours])
        slices.append((pos, pos + block_hours))
        kinds.append("regular")
        pos += block_hours

    taken = np.zeros(len(demand), dtype=bool)
    peak_starts = []
    for _ in range(n_peaks):
        d = np.where(taken, -np.inf, demand)
        h = int(np.argmax(d))
        s = min(max(h - peak_hours // 2, 0), len(demand) - peak_hours)
        taken[max(s - peak_hours, 0):s + 2 * peak_hours] = True
        peak_starts.append(s)
        pieces_d.append(demand[s:s + peak_hours])
        for k in cf:
            pieces_cf[k].append(cf[k][s:s + peak_hours])
        slices.append((pos, pos + peak_hours))
        kinds.append("peak")
        pos += peak_hours

    sc = OperationalScenario(
        probability=1.0,
        hours=np.ones(pos),
        weights=np.ones(pos),
        demand=np.concatenate(pieces_d),
        cf={k: np.concatenate(v) for k, v in pieces_cf.items()},
        slices=slices,
        slice_kinds=kinds,
        meta={"year": year, "season_starts": starts, "peak_starts": peak_starts, "seed": int(seed)},
    )
    sc.weights = annualization_weights(sc)
    return sc.validate()


def sample_scenarios(series, n, seed, **kw):
    """``n`` i.i.d. scenarios with uniform probabilities and derived seeds."""
    out = []
    for k in range(n):
        sc = sample_scenario(series, derive_seed(seed, "scenario", k), **kw)
        sc.probability = 1.0 / n
        out.append(sc)
    return out


def constant_scenarios(n, n_periods=409, demand=1000.0, cf=0.5, renewables=("wind", "solar"),
                       block_hours=96, peak_hours=25):
    """Identical scenarios with flat demand; the zero-variance degenerate case."""
    slices, kinds, pos = [], [], 0
    for _ in range(4):
        slices.append((pos, pos + block_hours)); kinds.append("regular"); pos += block_hours
    if peak_hours:
        slices.append((pos, pos + peak_hours)); kinds.append("peak"); pos += peak_hours
    out = []
    for _ in range(n):
        sc = OperationalScenario(1.0 / n, np.ones(pos), np.ones(pos), np.full(pos, float(demand)),
                                 {r: np.full(pos, float(cf)) for r in renewables}, list(slices), list(kinds))
        sc.weights = annualization_weights(sc)
        out.append(sc.validate())
    return out


def save_scenarios(scenarios, path):
    with open(path, "w") as fh:
        fh.write(dumps17({"scenarios": [s.to_dict() for s in scenarios]}))


def load_scenarios(path):
    with open(path) as fh:
        doc = loads17(fh.read())
    return [OperationalScenario.from_dict(d).validate() for d in doc["scenarios"]]
