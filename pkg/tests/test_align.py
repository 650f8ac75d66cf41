import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esync.align import (GAP, MEASURED, OUT_OF_RANGE, MergedDataset, coverage_report,
                         match_report, merge)
from esync.errors import EmptySeries, RateMismatch, SchemaError
from esync.eventsync import ShiftEstimate, estimate_shift
from esync.ingest import GameEvent, GameEventLog, SensorStream
from esync.timeline import AnchoredBinarySeries, Rate, TickEventSeries, UtcInstant
from oracles import nearest_bin

TICK = 7_812_500
R128 = Rate(128)


def grid(start_ns=0):
    return AnchoredBinarySeries(UtcInstant(start_ns), R128, [])


def estimate(shift, start_ns=0):
    return ShiftEstimate(shift, 1, 0, 1, UtcInstant(start_ns + shift * TICK), 1.0)


def game(ticks=(), horizon=10, player="p1"):
    events = tuple(GameEvent(t, "weapon_fire", {"player": player}) for t in ticks)
    return GameEventLog(events, R128, horizon)


def stream(name, period, start_ns, **channels):
    return SensorStream(name, period, UtcInstant(start_ns), channels)


def test_stream_on_grid_passes_through():
    s = stream("imu", TICK, 0, ax=[1.0, np.nan, 3.0], ay=[4.0, np.nan, 6.0])
    ds = merge([s], game(horizon=3), estimate(0), grid(), event_names=())
    assert list(ds.columns) == ["imu.ax", "imu.ay"]
    np.testing.assert_array_equal(ds.columns["imu.ax"], [1.0, np.nan, 3.0])
    assert ds.provenance["imu.ay"].tolist() == [MEASURED, GAP, MEASURED]
    assert ds.grid_start == UtcInstant(0)


def test_fire_lands_at_shifted_index():
    s = stream("mouse", TICK, 0, lmb=[0.0] * 10)
    ds = merge([s], game([0], horizon=3), estimate(5), grid(), player="p1")
    fire = ds.columns["game.weapon_fire"]
    assert np.flatnonzero(fire == 1).tolist() == [5]
    assert ds.bin_time(5) == UtcInstant(5 * 7_812_500)
    assert ds.provenance["game.weapon_fire"][5:8].tolist() == [MEASURED] * 3
    assert ds.provenance["game.weapon_fire"][:5].tolist() == [OUT_OF_RANGE] * 5


def test_grid_grows_to_cover_game_before_stream():
    s = stream("mouse", TICK, 0, lmb=[1.0, 0.0])
    ds = merge([s], game([0, 1], horizon=4), estimate(-3), grid(), player="p1")
    assert len(ds) == 5
    assert ds.grid_start == UtcInstant(-3 * TICK)
    assert ds.columns["game.weapon_fire"][:2].tolist() == [1.0, 1.0]
    assert ds.provenance["mouse.lmb"].tolist() == [OUT_OF_RANGE] * 3 + [MEASURED] * 2


def test_player_filter():
    log = GameEventLog((GameEvent(1, "weapon_fire", {"player": "p1"}),
                        GameEvent(2, "weapon_fire", {"player": "p2"})), R128, 4)
    s = stream("mouse", TICK, 0, lmb=[0.0] * 4)
    ds = merge([s], log, estimate(0), grid(), player="p2")
    assert np.flatnonzero(ds.columns["game.weapon_fire"] == 1).tolist() == [2]


@settings(max_examples=60, deadline=None)
@given(st.integers(-10 ** 9, 10 ** 9), st.integers(1, 60), st.integers(0, 2 ** 32 - 1))
def test_offset_grid_rate_stream_matches_per_sample_oracle(start_ns, n, seed):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=n).round(3)
    s = stream("a", TICK, start_ns, x=values)
    ds = merge([s], game(horizon=1), estimate(0), grid(), event_names=())
    origin = ds.grid_start.ns
    for i, v in enumerate(values):
        k = nearest_bin(start_ns + i * TICK, 0, TICK) - nearest_bin(origin, 0, TICK)
        assert ds.columns["a.x"][k] == v
        assert ds.provenance["a.x"][k] == MEASURED


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 9), st.integers(1, 80),
       st.sampled_from([TICK, 8_000_000, 10_000_000, 13_333_333, 20_000_000]),
       st.integers(0, 2 ** 32 - 1))
def test_slower_stream_samples_land_in_nearest_bin(start_ns, n, period, seed):
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 1000, size=n).astype(float)
    s = stream("imu", period, start_ns, ax=values)
    ds = merge([s], game(horizon=1), estimate(0), grid(), event_names=())
    base = nearest_bin(ds.grid_start.ns, 0, TICK)
    for i, v in enumerate(values):
        k = nearest_bin(start_ns + i * period, 0, TICK) - base
        assert ds.columns["imu.ax"][k] == v


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 8), st.lists(st.sampled_from([0.0, 1.0, np.nan]), min_size=1,
                                         max_size=120),
       st.sampled_from([1_000_000, 3_906_250, 5_000_000, TICK]))
def test_binary_channel_is_or_over_nearest_bins(start_ns, lmb, period):
    s = stream("mouse", period, start_ns, lmb=lmb)
    ds = merge([s], game(horizon=1), estimate(0), grid(), event_names=())
    base = nearest_bin(ds.grid_start.ns, 0, TICK)
    expected = {}
    for i, v in enumerate(lmb):
        k = nearest_bin(start_ns + i * period, 0, TICK) - base
        if not np.isnan(v):
            expected[k] = max(expected.get(k, 0.0), v)
    col = ds.columns["mouse.lmb"]
    for k, v in expected.items():
        assert col[k] == v
        assert ds.provenance["mouse.lmb"][k] == MEASURED
    assert set(np.flatnonzero(ds.provenance["mouse.lmb"] == MEASURED).tolist()) == set(expected)


def test_half_way_sample_goes_to_earlier_bin():
    s = stream("mouse", TICK, TICK // 2, lmb=[1.0])
    ds = merge([s], game(horizon=2), estimate(0), grid(), event_names=())
    np.testing.assert_array_equal(ds.columns["mouse.lmb"], [1.0, np.nan])
    assert ds.provenance["mouse.lmb"].tolist() == [MEASURED, OUT_OF_RANGE]


def two_streams():
    mouse = stream("mouse", TICK, 3_000_000, x=np.arange(50.0), lmb=np.zeros(50))
    imu = stream("imu", 10_000_000, -1_000_000_000, ax=np.sin(np.arange(150.0)))
    return mouse, imu


def test_merge_is_idempotent():
    mouse, imu = two_streams()
    args = ([mouse, imu], game([1, 4], horizon=20), estimate(7, 3_000_000), grid(3_000_000))
    a, b = merge(*args, player="p1"), merge(*args, player="p1")
    assert a == b
    assert a.to_csv() == b.to_csv()


def test_no_invented_data():
    mouse, imu = two_streams()
    ds = merge([mouse, imu], game(horizon=20), estimate(0, 3_000_000), grid(3_000_000))
    sources = {"mouse.x": mouse.channels["x"], "mouse.lmb": mouse.channels["lmb"],
               "imu.ax": imu.channels["ax"]}
    for key, src in sources.items():
        measured = ds.columns[key][ds.provenance[key] == MEASURED]
        assert np.isin(measured, src).all()
        assert not np.isnan(measured).any()


def test_merge_errors():
    with pytest.raises(EmptySeries):
        merge([], game(), estimate(0), grid())
    with pytest.raises(RateMismatch):
        merge([stream("m", 10_000_000, 0, lmb=[0.0, 1.0])], game(), estimate(0), grid())
    with pytest.raises(RateMismatch):
        log = GameEventLog((), Rate(64), 5)
        merge([stream("m", TICK, 0, x=[1.0])], log, estimate(0), grid())


def test_match_report_noise_free():
    f = TickEventSeries(R128, [2, 9, 20, 33], 40)
    bits = np.zeros(60, dtype=np.uint8)
    bits[f.event_ticks + 11] = 1
    g = AnchoredBinarySeries(UtcInstant(0), R128, bits)
    est = estimate_shift(f, g, min_events=1)
    rep = match_report(f, g, est)
    assert (rep.matched, rep.unmatched_fire, rep.spurious_presses) == (4, [], 0)


def test_match_report_extra_presses():
    f = TickEventSeries(R128, [2, 9, 20, 33], 40)
    bits = np.zeros(60, dtype=np.uint8)
    bits[f.event_ticks + 11] = 1
    bits[[0, 1, 50]] = 1
    g = AnchoredBinarySeries(UtcInstant(0), R128, bits)
    rep = match_report(f, g, estimate_shift(f, g, min_events=1))
    assert rep.unmatched_fire == []
    assert rep.spurious_presses == 3


def test_match_report_wrong_shift():
    f = TickEventSeries(R128, [2, 9, 20, 33], 40)
    bits = np.zeros(60, dtype=np.uint8)
    bits[f.event_ticks + 11] = 1
    g = AnchoredBinarySeries(UtcInstant(0), R128, bits)
    rep = match_report(f, g, estimate(12))
    assert rep.matched < 4
    assert rep.unmatched_fire == [2, 9, 20, 33]


def dataset(provs):
    cols = {k: np.where(np.array(v) == MEASURED, 1.0, np.nan) for k, v in provs.items()}
    return MergedDataset(UtcInstant(0), R128, cols, {k: np.array(v) for k, v in provs.items()})


def test_coverage_all_measured():
    rep = coverage_report(dataset({"a": [0] * 5, "b": [0] * 5}))
    assert rep.measured_fraction == {"a": 1.0, "b": 1.0}
    assert rep.gap_intervals == {"a": [], "b": []}
    assert rep.pair_coverage[("a", "b")] is None


def test_coverage_imu_covers_mouse_gaps():
    mouse = [MEASURED] * 100
    for i in range(20, 30):
        mouse[i] = GAP
    rep = coverage_report(dataset({"mouse.x": mouse, "imu.ax": [MEASURED] * 100}))
    assert rep.measured_fraction["mouse.x"] == pytest.approx(0.9)
    assert rep.gap_intervals["mouse.x"] == [(20, 30)]
    assert rep.pair_coverage[("mouse.x", "imu.ax")] == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([MEASURED, GAP, OUT_OF_RANGE]),
                          st.sampled_from([MEASURED, GAP, OUT_OF_RANGE])),
                min_size=1, max_size=100))
def test_pair_statistic_matches_counting(rows):
    a, b = [r[0] for r in rows], [r[1] for r in rows]
    rep = coverage_report(dataset({"a": a, "b": b}))
    a_gaps = [i for i, p in enumerate(a) if p == GAP]
    if a_gaps:
        covered = sum(1 for i in a_gaps if b[i] == MEASURED)
        assert rep.pair_coverage[("a", "b")] == covered / len(a_gaps)
    else:
        assert rep.pair_coverage[("a", "b")] is None
    assert rep.measured_fraction["b"] == b.count(MEASURED) / len(b)
    assert 0.0 <= rep.measured_fraction["a"] <= 1.0


def test_coverage_json_shape():
    doc = coverage_report(dataset({"a": [0, 1], "b": [0, 0]})).to_dict()
    assert doc["columns"]["a"] == {"measured_fraction": 0.5, "gap_intervals": [[1, 2]]}
    assert {"a": "a", "b": "b", "b_measured_during_a_gaps": 1.0} in doc["pairs"]


def test_merged_csv_round_trip():
    mouse, imu = two_streams()
    ds = merge([mouse, imu], game([1, 4], horizon=20), estimate(7, 3_000_000),
               grid(3_000_000), player="p1")
    text = ds.to_csv()
    lines = text.splitlines()
    assert lines[0] == "# grid_rate=128"
    assert lines[1].startswith("timestamp,mouse.x,mouse.lmb,imu.ax,game.weapon_fire,mouse.x_prov")
    assert MergedDataset.from_csv(text) == ds


@pytest.mark.parametrize("text", [
    "timestamp,a,a_prov\n1970-01-01T00:00:00Z,1,M\n",
    "# grid_rate=128\ntimestamp,a,b_prov\n1970-01-01T00:00:00Z,1,M\n",
    "# grid_rate=128\ntimestamp,a,a_prov\n1970-01-01T00:00:00Z,1,X\n",
    "# grid_rate=128\ntimestamp,a,a_prov\n1970-01-01T00:00:00Z,1,M\n1970-01-01T00:00:01Z,1,M\n",
])
def test_merged_csv_rejects(text):
    with pytest.raises(SchemaError):
        MergedDataset.from_csv(text)
