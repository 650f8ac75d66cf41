"""Acceptance suite: one PASS/FAIL line per criterion, at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v``; the summary section at the end of
the run lists every criterion with the measured value.
"""
import time

import numpy as np

from esync.align import MEASURED, MergedDataset, coverage_report, match_report, merge
from esync.clocksim import (ClockModel, DisciplinePolicy, OffsetTrace, accuracy_stats,
                            drift_from_ms_per_hour, simulate)
from esync.eventsync import (brute_force_profile, count_at_shift, estimate_shift,
                             fast_profile)
from esync.fixtures import generate_session
from esync.ingest import (GameEvent, GameEventLog, SensorStream, detect_gaps,
                          extract_fire_series, extract_lmb_series, parse_game_events,
                          parse_sensor_csv, serialize_game_events, serialize_sensor_csv)
from esync.timeline import AnchoredBinarySeries, Rate, TickEventSeries, UtcInstant

S = 1_000_000_000
MS = 1_000_000
TICK = 7_812_500
R128 = Rate(128)
# nominal session extents for drawing the true shift (about 2.6 min each side)
NOMINAL_TICKS = 20_000


def recover(session):
    fire = extract_fire_series(session.game, session.truth["player"])
    g = extract_lmb_series(session.mouse, session.game.tickrate)
    return fire, g, estimate_shift(fire, g)


def random_bits(rng, n, density):
    return (rng.random(n) < density).astype(np.uint8)


def test_criterion_01_fast_profile_equals_oracle(criterion):
    rng = np.random.default_rng(1)
    mismatches = 0
    started = time.perf_counter()
    for _ in range(200):
        M, N = (int(v) for v in rng.integers(1, 2049, size=2))
        fd, gd = 10 ** rng.uniform(-3, np.log10(0.5), size=2)
        f = TickEventSeries.from_dense(random_bits(rng, M, fd))
        g = AnchoredBinarySeries(UtcInstant(0), R128, random_bits(rng, N, gd))
        mismatches += fast_profile(f, g) != brute_force_profile(f, g)
    elapsed = time.perf_counter() - started
    criterion(1, "fast == brute on 200 instances, < 10 s", mismatches == 0 and elapsed < 10,
              f"{mismatches} mismatches, {elapsed:.2f} s")


def test_criterion_02_closed_loop_shift_recovery(criterion):
    rng = np.random.default_rng(2)
    exact = 0
    failures = []
    for i in range(100):
        fires = int(rng.integers(30, 81))
        dropout = float(rng.uniform(0.0, 0.3))
        spurious = int(rng.integers(0, 2 * fires + 1))
        shift = int(rng.integers(-NOMINAL_TICKS + 1, NOMINAL_TICKS))
        session = generate_session(1000 + i, shift, fires=fires, dropout=dropout,
                                   spurious=spurious, gaps=int(rng.integers(0, 4)))
        fire, g, est = recover(session)
        assert -session.truth["horizon"] + 1 <= shift <= len(g) - 1
        if est.shift_s == shift and est.tie_count == 1:
            exact += 1
        else:
            failures.append((i, shift, est.shift_s, est.tie_count))
    criterion(2, "true shift recovered with tie_count 1, tolerance 0 ticks", exact == 100,
              f"{exact}/100 exact; failures {failures[:5]}")


def test_criterion_03_large_instance(criterion):
    rng = np.random.default_rng(3)
    M = N = 2 ** 20
    f = TickEventSeries.from_dense(random_bits(rng, M, 0.002))
    g = AnchoredBinarySeries(UtcInstant(0), R128, random_bits(rng, N, 0.01))
    started = time.perf_counter()
    profile = fast_profile(f, g)
    elapsed = time.perf_counter() - started
    shifts = rng.integers(-M + 1, N, size=100)
    # bias half of the checks toward shifts with non-zero counts
    shifts[:50] = profile.shifts[rng.choice(np.flatnonzero(profile.counts), size=50)]
    disagree = sum(profile.count_at(int(s)) != count_at_shift(f, g, int(s)) for s in shifts)
    criterion(3, "M = N = 2^20 in < 5 s, 100 spot checks agree",
              elapsed < 5 and disagree == 0, f"{elapsed:.2f} s, {disagree} disagreements")


def test_criterion_04_undisciplined_drift(criterion):
    trace = simulate(ClockModel(drift_rate=drift_from_ms_per_hour(50)), None, 2 * 3600 * S, S)
    final = int(trace.offsets[-1])
    criterion(4, "50 ms/h for 2 h ends at exactly 100 ms", final == 100 * MS,
              f"final offset {final} ns")


def test_criterion_05_disciplined_pc_clock(criterion):
    policy = DisciplinePolicy(64 * S, "step", measurement_error_stddev_ns=MS)
    within = 0
    worst = []
    for seed in range(1000):
        model = ClockModel(drift_rate=drift_from_ms_per_hour(50), seed=seed)
        trace = simulate(model, policy, 2 * 3600 * S, S)
        peak = accuracy_stats(trace, 600 * S).max_abs_ns
        within += peak <= 3 * MS
        worst.append(peak)
    fraction = within / 1000
    criterion(5, "max |offset| <= 3 ms in >= 99% of 1000 seeds (2 h, step 64 s, sigma 1 ms)",
              fraction >= 0.99,
              f"{fraction:.1%} within 3 ms; median peak {np.median(worst) / MS:.2f} ms")


def test_criterion_06_sensor_resync_bound(criterion):
    policy = DisciplinePolicy(600 * S, "step", measurement_error_stddev_ns=0)
    trace = simulate(ClockModel(drift_rate=drift_from_ms_per_hour(20)), policy, 2 * 3600 * S, S)
    peak = int(np.abs(trace.offsets).max())
    criterion(6, "20 ms/h, every 600 s, zero error: max |offset| <= 3_333_334 ns",
              peak <= 3_333_334, f"max |offset| {peak} ns")


def test_criterion_07_end_to_end_accuracy(criterion):
    worst_clock, worst_error, sessions = 0, 0, 30
    # sessions rotate between no bias and a 2.2 ms fast or slow bias on top
    # of the disciplined clock error, pushing the total toward the 3 ms ceiling
    biases = [0, 2_200_000, -2_200_000]
    for i in range(sessions):
        session = generate_session(700 + i, int(np.random.default_rng(i).integers(-5000, 5000)),
                                   fires=50, dropout=0.1, spurious=30, gaps=2,
                                   timing_noise=True, clock_bias_ns=biases[i % 3])
        truth = session.truth
        worst_clock = max(worst_clock, truth["mouse_clock_max_abs_ns"],
                          truth["imu_clock_max_abs_ns"])
        fire, g, est = recover(session)
        ds = merge([session.mouse, session.imu], session.game, est, g,
                   player=truth["player"])
        bins = np.flatnonzero(ds.columns["game.weapon_fire"] == 1)
        grid_ns = np.array([ds.bin_time(int(k)).ns for k in bins])
        press_ns = np.array([UtcInstant.parse(t).ns for t in truth["press_utc"]])
        assert grid_ns.size == press_ns.size
        worst_error = max(worst_error, int(np.abs(grid_ns - press_ns).max()))
    assert worst_clock <= 3 * MS, "precondition: simulated clock error must stay within 3 ms"
    criterion(7, "every merged fire within 1 tick of its true press time",
              worst_error <= TICK,
              f"worst error {worst_error} ns over {sessions} sessions "
              f"(clock error <= {worst_clock / MS:.2f} ms)")


def test_criterion_08_every_fire_matches_a_press(criterion):
    rng = np.random.default_rng(8)
    ok = 0
    for i in range(50):
        fires = int(rng.integers(30, 81))
        spurious = int(rng.integers(1, 2 * fires + 1))
        shift = int(rng.integers(-NOMINAL_TICKS + 1, NOMINAL_TICKS))
        session = generate_session(800 + i, shift, fires=fires, spurious=spurious)
        fire, g, est = recover(session)
        rep = match_report(fire, g, est)
        ok += est.shift_s == shift and rep.unmatched_fire == [] and rep.spurious_presses > 0
    # with dropout the only unmatched fires must be the ones whose press was dropped
    dropped_ok = 0
    for i in range(20):
        session = generate_session(900 + i, 123, fires=40, dropout=0.2, spurious=40)
        fire, g, est = recover(session)
        rep = match_report(fire, g, est)
        dropped_ok += rep.unmatched_fire == session.truth["dropped_fire_ticks"]
    criterion(8, "unmatched_fire empty and spurious_presses > 0 on recovered fixtures",
              ok == 50 and dropped_ok == 20,
              f"{ok}/50 clean fixtures, {dropped_ok}/20 dropout fixtures list exactly the dropped fires")


def test_criterion_09_gap_coverage(criterion):
    exact, covered = 0, []
    for i in range(30):
        session = generate_session(500 + i, 40 * i - 600, fires=40, spurious=10, gaps=1 + i % 5)
        gaps = detect_gaps(session.mouse).gaps
        exact += [list(g) for g in gaps] == session.truth["gaps"]
        fire, g, est = recover(session)
        ds = merge([session.mouse, session.imu], session.game, est, g,
                   player=session.truth["player"])
        covered.append(coverage_report(ds).pair_coverage[("mouse.x", "imu.ax")])
    criterion(9, "injected gaps detected exactly and (mouse, imu) coverage = 1.0",
              exact == 30 and all(c == 1.0 for c in covered),
              f"{exact}/30 exact gap sets, pair statistic min {min(covered)}")


def random_sensor_stream(rng):
    n, ch = int(rng.integers(0, 60)), int(rng.integers(1, 5))
    names = [f"c{j}" for j in range(ch)]
    channels = {}
    for name in names:
        values = rng.normal(scale=10 ** rng.uniform(-3, 6), size=n)
        values[rng.random(n) < 0.1] = np.nan
        values[rng.random(n) < 0.2] = rng.integers(-100, 100)
        channels[name] = values
    return SensorStream("s", int(rng.integers(1, 10 ** 8)),
                        UtcInstant(int(rng.integers(0, 4 * 10 ** 18))), channels)


def random_game_log(rng):
    ticks = np.sort(rng.integers(0, 10 ** 6, size=int(rng.integers(0, 40))))
    names = ["weapon_fire", "player_jump", "bomb_planted", "naïve \"quoted\" name"]
    events = tuple(GameEvent(int(t), str(rng.choice(names)),
                             {"player": str(rng.choice(["p1", "p2", "ünï"]))}) for t in ticks)
    horizon = (int(ticks[-1]) + 1 if ticks.size else 1) + int(rng.integers(0, 500))
    return GameEventLog(events, Rate(int(rng.choice([64, 128]))), horizon)


def random_merged(rng):
    n, ch = int(rng.integers(1, 40)), int(rng.integers(1, 4))
    cols, provs = {}, {}
    for j in range(ch):
        prov = rng.integers(0, 3, size=n).astype(np.uint8)
        values = np.where(prov == MEASURED, rng.normal(size=n).round(int(rng.integers(0, 9))),
                          np.nan)
        cols[f"s.c{j}"], provs[f"s.c{j}"] = values, prov
    return MergedDataset(UtcInstant(int(rng.integers(0, 4 * 10 ** 18))), R128, cols, provs)


def test_criterion_10_round_trips(criterion):
    rng = np.random.default_rng(10)
    results = {}
    results["sensor CSV"] = sum(
        parse_sensor_csv(serialize_sensor_csv(s), name="s") == s
        for s in (random_sensor_stream(rng) for _ in range(50)))
    results["game JSONL"] = sum(
        parse_game_events(serialize_game_events(log)) == log
        for log in (random_game_log(rng) for _ in range(50)))
    traces = [OffsetTrace(int(rng.integers(1, 10 ** 10)),
                          rng.integers(-10 ** 12, 10 ** 12, size=int(rng.integers(2, 100))))
              for _ in range(50)]
    results["offset trace CSV"] = sum(OffsetTrace.from_csv(t.to_csv()) == t for t in traces)
    results["merged CSV"] = sum(
        MergedDataset.from_csv(ds.to_csv()) == ds for ds in (random_merged(rng) for _ in range(50)))
    criterion(10, "parse(serialize(x)) == x for 50 documents of each format",
              all(v == 50 for v in results.values()),
              ", ".join(f"{k} {v}/50" for k, v in results.items()))
