import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhsp.timeseries import (
    OperationalScenario, ReferenceSeries, ScenarioError, annualization_weights,
    load_scenarios, sample_scenario, sample_scenarios, save_scenarios, synth_reference,
)


@pytest.fixture(scope="module")
def ref():
    return synth_reference(0, years=2)


def _constant_series(demand=1000.0, cf=0.5, year=2015):
    base = synth_reference(0, years=1, start_year=year, noise=False)
    n = len(base.timestamps)
    return ReferenceSeries(base.timestamps, np.full(n, demand), {"wind": np.full(n, cf), "solar": np.full(n, cf)})


def test_synth_record_count_and_determinism():
    a = synth_reference(0, years=1)
    assert len(a.timestamps) == 17_520
    b = synth_reference(0, years=1)
    assert np.array_equal(a.demand, b.demand)
    assert all(np.array_equal(a.cf[k], b.cf[k]) for k in a.cf)
    assert not np.array_equal(a.demand, synth_reference(1, years=1).demand)


def test_solar_zero_at_midnight(ref):
    minutes = (ref.timestamps - ref.timestamps.astype("datetime64[D]")).astype(int)
    assert np.all(ref.cf["solar"][minutes == 0] == 0.0)


def test_leap_years_have_365_days():
    s = synth_reference(3, years=2, start_year=2015)  # 2016 is a leap year
    assert s.years == [2015, 2016]
    assert len(s.timestamps) == 2 * 17_520


def test_default_scenario_shape(ref):
    sc = sample_scenario(ref, 1)
    assert sc.n_periods == 409
    assert len(sc.slices) == 5
    assert sc.slice_kinds == ["regular"] * 4 + ["peak"]
    assert np.sum(sc.weights * sc.hours) == pytest.approx(8760, rel=1e-12)


def test_default_weights_closed_form(ref):
    W = sample_scenario(ref, 2).weights
    assert W[:384] == pytest.approx(np.full(384, 8735 / 384))
    assert 8735 / 384 == pytest.approx(22.7474, abs=1e-4)
    assert np.all(W[384:] == 1.0)


def _scenario(n, h, kinds):
    slices, pos = [], 0
    for k in range(len(kinds)):
        size = n // len(kinds)
        slices.append((pos, pos + size))
        pos += size
    return OperationalScenario(1.0, np.full(n, float(h)), np.ones(n), np.zeros(n), {}, slices, kinds)


def test_full_year_weights_one():
    assert np.all(annualization_weights(_scenario(8760, 1, ["regular"])) == 1.0)


def test_doubling_hours_halves_weights():
    w1 = annualization_weights(_scenario(4380, 1, ["regular"]))
    w2 = annualization_weights(_scenario(4380, 2, ["regular"]))
    assert w2 == pytest.approx(w1 / 2)
    assert np.sum(w2 * 2) == pytest.approx(8760)


def test_constant_series_gives_constant_scenarios():
    s = _constant_series()
    for seed in range(5):
        sc = sample_scenario(s, seed)
        assert np.all(sc.demand == 1000.0)
        assert all(np.all(v == 0.5) for v in sc.cf.values())


def test_peak_contains_spike():
    s = _constant_series()
    d = s.demand.copy()
    h_star = 3000  # hour of year
    d[2 * h_star:2 * h_star + 2] = 5000.0
    s = ReferenceSeries(s.timestamps, d, s.cf)
    sc = sample_scenario(s, 4)
    a, b = sc.slices[-1]
    assert np.max(sc.demand[a:b]) == 5000.0
    assert sc.meta["peak_starts"][0] <= h_star < sc.meta["peak_starts"][0] + 25


def test_peak_shifted_inward_at_year_edge():
    s = _constant_series()
    d = s.demand.copy()
    d[:2] = 4000.0
    sc = sample_scenario(ReferenceSeries(s.timestamps, d, s.cf), 0)
    assert sc.meta["peak_starts"] == [0]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_blocks_are_verbatim_reference_slices(seed):
    ref = synth_reference(0, years=2)
    sc = sample_scenario(ref, seed)
    demand, cf, months = ref.hourly_year(sc.meta["year"])
    for (a, b), start in zip(sc.slices[:4], sc.meta["season_starts"]):
        assert np.array_equal(sc.demand[a:b], demand[start:start + 96])
        assert np.array_equal(sc.cf["wind"][a:b], cf["wind"][start:start + 96])
        # a block never straddles two seasons or the Feb/Dec wrap
        assert len(set(months[start:start + 96]) & {12}) == 0 or set(months[start:start + 96]) == {12}
    assert sample_scenario(ref, seed).to_dict() == sc.to_dict()


def test_season_too_short():
    s = _constant_series()
    with pytest.raises(ScenarioError):
        sample_scenario(s, 0, block_hours=24 * 93)


def test_sampled_mean_close_to_reference():
    ref = synth_reference(5, years=3, seasonal=False)
    hourly = np.concatenate([ref.hourly_year(y)[0] for y in ref.years])
    scs = sample_scenarios(ref, 1000, seed=9)
    means = [np.sum(s.weights * s.hours * s.demand) / 8760 for s in scs]
    assert abs(np.mean(means) / hourly.mean() - 1) <= 0.02


def test_sample_scenarios_probabilities(ref):
    scs = sample_scenarios(ref, 4, seed=1)
    assert sum(s.probability for s in scs) == pytest.approx(1.0)
    assert len({s.meta["seed"] for s in scs}) == 4


def test_scenario_and_csv_roundtrip(ref, tmp_path):
    scs = sample_scenarios(ref, 3, seed=2)
    save_scenarios(scs, tmp_path / "s.json")
    back = load_scenarios(tmp_path / "s.json")
    assert [s.to_dict() for s in back] == [s.to_dict() for s in scs]
    small = synth_reference(1, years=1)
    small.to_csv(tmp_path / "ref.csv")
    back = ReferenceSeries.from_csv(tmp_path / "ref.csv")
    assert np.array_equal(back.demand, small.demand)
    assert np.array_equal(back.timestamps, small.timestamps)


def test_reference_validation():
    ts = np.array(["2015-01-01T00:00"], dtype="datetime64[m]")
    with pytest.raises(ScenarioError):
        ReferenceSeries(ts, [1.0], {"wind": [1.5]})
    with pytest.raises(ScenarioError):
        ReferenceSeries(ts, [-1.0], {})
