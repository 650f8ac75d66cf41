"""Synthetic recording sessions with known ground truth.

A session is a 128 Hz mouse log, a 100 Hz IMU log and a game event log whose
tick axis is offset from the mouse log by a chosen shift. Every random choice
comes from one ``numpy.random.default_rng(seed)``, so a seed reproduces the
session byte for byte.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .clocksim import (ClockModel, DisciplinePolicy, OffsetTrace, accuracy_stats,
                       drift_from_ms_per_hour, simulate)
from .ingest import (FIRE_EVENT, GameEvent, GameEventLog, SensorStream,
                     serialize_game_events, serialize_sensor_csv)
from .timeline import NS_PER_SECOND, TICKRATE_128, UtcInstant

TICK_NS = 7_812_500
IMU_PERIOD_NS = 10_000_000
SESSION_EPOCH = UtcInstant.parse("2019-03-01T12:00:00Z")

MIN_FIRE_GAP = 8        # ticks; ~16 shots/s, faster than any weapon cycles
MEAN_EXTRA_GAP = 40     # ticks
PADDING = (128, 1281)   # ticks of idle log before/after the action
GAP_LENGTH = (8, 65)    # mouse rows lost per injected dropout

MOUSE_FILE, IMU_FILE, GAME_FILE, TRUTH_FILE = "mouse.csv", "imu.csv", "game.jsonl", "truth.json"


@dataclass(frozen=True)
class Session:
    mouse: SensorStream
    imu: SensorStream
    game: GameEventLog
    truth: dict


def _round_away(x: np.ndarray) -> np.ndarray:
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def _disciplined_trace(seed: int, span_ns: int) -> OffsetTrace:
    """PC-like clock error: 20 ms/h drift, stepped every 64 s, 0.3 ms reference noise."""
    model = ClockModel(drift_rate=drift_from_ms_per_hour(20), seed=seed)
    policy = DisciplinePolicy(64 * NS_PER_SECOND, measurement_error_stddev_ns=300_000)
    duration = (span_ns // NS_PER_SECOND + 2) * NS_PER_SECOND
    return simulate(model, policy, duration, NS_PER_SECOND)


def _place_gaps(rng: np.random.Generator, n_rows: int, count: int,
                forbidden: np.ndarray) -> List[Tuple[int, int]]:
    blocked = np.zeros(n_rows + 1, dtype=bool)
    blocked[forbidden] = True
    gaps: List[Tuple[int, int]] = []
    attempts = 0
    while len(gaps) < count:
        attempts += 1
        if attempts > 1000 * (count + 1):
            raise ValueError(f"cannot fit {count} gaps into {n_rows} mouse rows")
        length = int(rng.integers(*GAP_LENGTH))
        if length >= n_rows - 2:
            continue
        start = int(rng.integers(1, n_rows - length))
        # keep one valid row on each side so every gap stays a separate interval
        if blocked[start - 1:start + length + 1].any():
            continue
        blocked[start - 1:start + length + 1] = True
        gaps.append((start, start + length))
    return sorted(gaps)


def generate_session(seed: int, shift_ticks: int, fires: int = 40, dropout: float = 0.0,
                     spurious: int = 0, gaps: int = 0, player: str = "p1",
                     timing_noise: bool = False, clock_bias_ns: int = 0) -> Session:
    """Build one session whose game tick ``m`` is mouse row ``m + shift_ticks``.

    ``dropout`` is the fraction of fire events whose button press is missing
    from the mouse log, ``spurious`` the number of extra single-tick presses
    unrelated to any shot, ``gaps`` the number of mouse dropouts (rows with
    every cell empty). With ``timing_noise`` the game's tick grid gets a random
    sub-tick phase against the mouse sampling grid and both loggers run on
    disciplined but imperfect clocks; ``clock_bias_ns`` adds a constant error
    on top of the mouse clock (only meaningful with ``timing_noise``).
    """
    if fires < 1:
        raise ValueError("need at least one fire event")
    if not 0.0 <= dropout < 1.0:
        raise ValueError("dropout must be in [0, 1)")
    if spurious < 0 or gaps < 0:
        raise ValueError("spurious and gaps must be non-negative")
    rng = np.random.default_rng(seed)

    spacing = MIN_FIRE_GAP + rng.geometric(1.0 / MEAN_EXTRA_GAP, size=fires - 1)
    offsets = np.concatenate(([0], np.cumsum(spacing))).astype(np.int64)
    active = int(offsets[-1]) + 1
    base = int(rng.integers(*PADDING))
    pre_game, pre_mouse = (base, base + shift_ticks) if shift_ticks >= 0 else (base - shift_ticks, base)
    horizon = pre_game + active + int(rng.integers(*PADDING))
    n_rows = pre_mouse + active + int(rng.integers(*PADDING))
    fire_ticks = pre_game + offsets
    mouse_start = SESSION_EPOCH + int(rng.integers(0, 3600)) * NS_PER_SECOND

    dropped = np.zeros(fires, dtype=bool)
    dropped[rng.choice(fires, size=int(round(dropout * fires)), replace=False)] = True

    span_ns = n_rows * TICK_NS
    if timing_noise:
        phase = int(rng.integers(-TICK_NS // 2, TICK_NS // 2))
        mouse_trace = _disciplined_trace(int(rng.integers(2 ** 31)), span_ns)
        imu_trace = _disciplined_trace(int(rng.integers(2 ** 31)), span_ns + 2 * NS_PER_SECOND)
    else:
        phase, mouse_trace, imu_trace = 0, None, None

    # true press instants, relative to mouse_start
    press_rel = (fire_ticks + shift_ticks) * TICK_NS + phase
    seen_at = press_rel.astype(np.float64)
    if mouse_trace is not None:
        seen_at = seen_at + clock_bias_ns + mouse_trace.offset_at(
            np.clip(press_rel, 0, mouse_trace.span_ns))
    press_rows = _round_away(seen_at / TICK_NS)
    kept = ~dropped & (press_rows >= 0) & (press_rows < n_rows)

    lmb = np.zeros(n_rows)
    lmb[press_rows[kept]] = 1.0

    mapped = fire_ticks + shift_ticks
    forbidden = np.concatenate((press_rows[kept], mapped[(mapped >= 0) & (mapped < n_rows)]))
    gap_list = _place_gaps(rng, n_rows, gaps, forbidden)
    in_gap = np.zeros(n_rows, dtype=bool)
    for lo, hi in gap_list:
        in_gap[lo:hi] = True

    candidates = np.ones(n_rows, dtype=bool)
    candidates[forbidden] = False
    candidates &= ~in_gap
    pool = np.flatnonzero(candidates)
    if spurious > pool.size:
        raise ValueError(f"no room for {spurious} spurious presses")
    spurious_rows = np.sort(rng.choice(pool, size=spurious, replace=False))
    lmb[spurious_rows] = 1.0

    x = 960 + np.cumsum(rng.integers(-3, 4, size=n_rows))
    y = 540 + np.cumsum(rng.integers(-3, 4, size=n_rows))
    rmb = (rng.random(n_rows) < 0.002).astype(np.float64)
    rmb[lmb == 1.0] = 0.0
    mouse_channels = {"x": x.astype(np.float64), "y": y.astype(np.float64), "lmb": lmb, "rmb": rmb}
    for values in mouse_channels.values():
        values[in_gap] = np.nan
    mouse = SensorStream("mouse", TICK_NS, mouse_start, mouse_channels)

    imu_start = mouse_start - NS_PER_SECOND
    n_imu = math.ceil((span_ns + 2 * NS_PER_SECOND) / IMU_PERIOD_NS)
    imu_nominal = np.arange(n_imu, dtype=np.int64) * IMU_PERIOD_NS
    imu_true = imu_nominal.astype(np.float64)
    if imu_trace is not None:
        imu_true = imu_true - imu_trace.offset_at(imu_nominal)
    t_s = imu_true / NS_PER_SECOND
    noise = rng.normal(0.0, 0.02, size=(3, n_imu))
    imu_channels = {
        "ax": np.round(np.sin(2 * np.pi * 0.7 * t_s) + noise[0], 4),
        "ay": np.round(0.5 * np.cos(2 * np.pi * 1.3 * t_s) + noise[1], 4),
        "az": np.round(9.81 + noise[2], 4),
    }
    imu = SensorStream("imu", IMU_PERIOD_NS, imu_start, imu_channels)

    events = [(int(t), 0, GameEvent(int(t), FIRE_EVENT, {"player": player})) for t in fire_ticks]
    for t in rng.integers(0, horizon, size=max(1, fires // 2)):
        events.append((int(t), 1, GameEvent(int(t), FIRE_EVENT, {"player": "p2"})))
    for t in rng.integers(0, horizon, size=max(1, fires // 4)):
        events.append((int(t), 2, GameEvent(int(t), "player_jump", {"player": player})))
    events.sort(key=lambda e: (e[0], e[1]))
    game = GameEventLog(tuple(e[2] for e in events), TICKRATE_128, horizon)

    truth = {
        "seed": seed,
        "player": player,
        "true_shift": shift_ticks,
        "horizon": horizon,
        "mouse_rows": n_rows,
        "tickrate": 128,
        "mouse_start": mouse_start.isoformat(),
        "phase_ns": phase,
        "fire_ticks": fire_ticks.tolist(),
        "dropped_fire_ticks": fire_ticks[dropped].tolist(),
        "press_utc": [(mouse_start + int(p)).isoformat() for p in press_rel],
        "press_rows": press_rows[kept].tolist(),
        "spurious_rows": spurious_rows.tolist(),
        "gaps": [list(g) for g in gap_list],
        "mouse_clock_max_abs_ns": (int(np.abs(mouse_trace.offsets + clock_bias_ns).max())
                                   if mouse_trace else 0),
        "imu_clock_max_abs_ns": accuracy_stats(imu_trace).max_abs_ns if imu_trace else 0,
    }
    return Session(mouse, imu, game, truth)


def write_session(session: Session, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / MOUSE_FILE).write_text(serialize_sensor_csv(session.mouse), encoding="utf-8")
    (out / IMU_FILE).write_text(serialize_sensor_csv(session.imu), encoding="utf-8")
    (out / GAME_FILE).write_text(serialize_game_events(session.game), encoding="utf-8")
    (out / TRUTH_FILE).write_text(json.dumps(session.truth, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
