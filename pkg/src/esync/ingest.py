"""On-disk formats: sensor CSV, game-event JSON lines, and the series built from them.

Sensor CSV::

    # sample_period_ns=7812500
    timestamp,x,y,lmb,rmb
    2019-03-01T12:00:00.000000000Z,10,20,0,0
    2019-03-01T12:00:00.007812500Z,,,,

An empty cell marks a missing value; a row with any empty cell is an invalid
sample. Game logs carry one JSON object per line (``tick``, ``name``, optional
``attrs``), optionally closed by a ``{"horizon": H, "tickrate": 128}`` record.
"""
from __future__ import annotations

import io
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import (MalformedLine, MissingChannel, MissingTick, NegativeTick,
                     NonMonotonicTimestamps, NoSuchPlayer, PeriodMismatch,
                     SchemaError, TimestampFormatError, UpsamplingUnsupported)
from .timeline import (NS_PER_SECOND, TICKRATE_128, AnchoredBinarySeries, Rate,
                       TickEventSeries, UtcInstant)

FIRE_EVENT = "weapon_fire"
LMB_CHANNEL = "lmb"
MOUSE_CHANNELS = ("x", "y", "lmb", "rmb")

_PERIOD_LINE = re.compile(r"^# sample_period_ns=(\d+)$")

Text = Union[str, bytes]


def _decode(data: Text) -> str:
    return data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data


def true_runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Maximal runs of True as sorted half-open ``(start, end)`` intervals."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        return []
    edges = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


@dataclass(frozen=True, eq=False)
class SensorStream:
    """Fixed-rate multichannel samples; NaN marks a missing value."""

    name: str
    sample_period_ns: int
    start: UtcInstant
    channels: Dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        if self.sample_period_ns <= 0:
            raise ValueError("sample_period_ns must be positive")
        if not self.channels:
            raise ValueError("a sensor stream needs at least one channel")
        frozen = {}
        for key, values in self.channels.items():
            arr = np.array(values, dtype=np.float64).reshape(-1)
            arr.setflags(write=False)
            frozen[key] = arr
        lengths = {arr.size for arr in frozen.values()}
        if len(lengths) != 1:
            raise ValueError(f"channel lengths differ: {sorted(lengths)}")
        object.__setattr__(self, "channels", frozen)

    def __len__(self) -> int:
        return next(iter(self.channels.values())).size

    def __eq__(self, other):
        if not isinstance(other, SensorStream):
            return NotImplemented
        return (self.name == other.name
                and self.sample_period_ns == other.sample_period_ns
                and self.start == other.start
                and list(self.channels) == list(other.channels)
                and all(np.array_equal(self.channels[k], other.channels[k], equal_nan=True)
                        for k in self.channels))

    @property
    def rate(self) -> Rate:
        return Rate.from_period_ns(self.sample_period_ns)

    @property
    def validity(self) -> np.ndarray:
        """1 where every channel holds a value, else 0."""
        present = np.ones(len(self), dtype=bool)
        for arr in self.channels.values():
            present &= ~np.isnan(arr)
        return present.astype(np.uint8)

    def sample_time(self, i: int) -> UtcInstant:
        return self.start + i * self.sample_period_ns

    def end(self) -> UtcInstant:
        return self.sample_time(len(self))


@dataclass(frozen=True)
class GapReport:
    stream_name: str
    gaps: List[Tuple[int, int]]

    def to_dict(self) -> dict:
        return {"stream_name": self.stream_name, "gaps": [list(g) for g in self.gaps]}


def format_value(v: float) -> str:
    """Shortest text that parses back to the same float; empty for NaN."""
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 2 ** 53:
        return str(int(v))
    return repr(float(v))


def parse_sensor_csv(data: Text, name: str = "stream") -> SensorStream:
    text = _decode(data)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [line.rstrip("\r") for line in lines]
    if len(lines) < 2:
        raise SchemaError("sensor CSV needs a '# sample_period_ns=' line and a header")
    m = _PERIOD_LINE.match(lines[0])
    if m is None or int(m.group(1)) == 0:
        raise SchemaError(f"line 1: expected '# sample_period_ns=<positive int>', got {lines[0]!r}")
    period = int(m.group(1))
    header = lines[1].split(",")
    if header[0] != "timestamp":
        raise SchemaError("line 2: first column must be 'timestamp'")
    names = header[1:]
    if not names or any(not n for n in names):
        raise SchemaError("line 2: need at least one named channel column")
    if len(set(names)) != len(names):
        raise SchemaError("line 2: duplicate channel names")

    n_rows = len(lines) - 2
    values = np.empty((n_rows, len(names)), dtype=np.float64)
    stamps: List[int] = []
    for row, line in enumerate(lines[2:]):
        line_no = row + 3
        cells = line.split(",")
        if len(cells) != len(header):
            raise SchemaError(f"line {line_no}: expected {len(header)} cells, got {len(cells)}")
        try:
            stamps.append(UtcInstant.parse(cells[0]).ns)
        except TimestampFormatError as exc:
            raise SchemaError(f"line {line_no}: {exc}") from None
        for col, cell in enumerate(cells[1:]):
            if cell == "":
                values[row, col] = np.nan
                continue
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(f"line {line_no}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise SchemaError(f"line {line_no}: non-finite value {cell!r}")
            values[row, col] = v

    ts = np.array(stamps, dtype=np.int64)
    if ts.size > 1:
        bad = np.flatnonzero(np.diff(ts) <= 0)
        if bad.size:
            raise NonMonotonicTimestamps(f"line {int(bad[0]) + 4}: timestamp does not increase")
        deviation = ts - (ts[0] + np.arange(ts.size, dtype=np.int64) * period)
        off_grid = np.flatnonzero(2 * np.abs(deviation) > period)
        if off_grid.size:
            i = int(off_grid[0])
            raise PeriodMismatch(
                f"line {i + 3}: timestamp is {int(deviation[i])} ns off the "
                f"{period} ns sample grid")
    start = UtcInstant(int(ts[0])) if ts.size else UtcInstant(0)
    return SensorStream(name, period, start,
                        {n: values[:, j] for j, n in enumerate(names)})


def serialize_sensor_csv(stream: SensorStream) -> str:
    buf = io.StringIO()
    buf.write(f"# sample_period_ns={stream.sample_period_ns}\n")
    buf.write(",".join(["timestamp", *stream.channels]) + "\n")
    columns = [arr.tolist() for arr in stream.channels.values()]
    for i in range(len(stream)):
        cells = [stream.sample_time(i).isoformat()]
        cells.extend(format_value(col[i]) for col in columns)
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


@dataclass(frozen=True)
class GameEvent:
    tick: int
    name: str
    attrs: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class GameEventLog:
    events: Tuple[GameEvent, ...]
    tickrate: Rate
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        prev = 0
        for ev in self.events:
            if ev.tick < prev:
                raise ValueError("event ticks must be non-decreasing")
            prev = ev.tick
        if self.horizon < 1 or (self.events and self.events[-1].tick >= self.horizon):
            raise ValueError(f"horizon {self.horizon} does not cover every event")


def _rate_from_json(value, line_no: int) -> Rate:
    try:
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise ValueError
        return Rate(Fraction(value))
    except (ValueError, ZeroDivisionError):
        raise MalformedLine(line_no, f"invalid tickrate {value!r}") from None


def _rate_to_json(rate: Rate):
    tps = rate.ticks_per_second
    return tps.numerator if tps.denominator == 1 else str(tps)


def parse_game_events(data: Text) -> GameEventLog:
    lines = _decode(data).split("\n")
    events: List[GameEvent] = []
    meta: Optional[dict] = None
    meta_line = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if meta is not None:
            raise MalformedLine(meta_line, "metadata record must be the final line")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, "expected a JSON object")
        if "tick" not in obj:
            if "horizon" in obj:
                meta, meta_line = obj, line_no
                continue
            raise MissingTick(line_no)
        tick = obj["tick"]
        if isinstance(tick, bool) or not isinstance(tick, int):
            raise MalformedLine(line_no, f"tick must be an integer, got {tick!r}")
        if tick < 0:
            raise NegativeTick(line_no, tick)
        if events and tick < events[-1].tick:
            raise MalformedLine(line_no, f"tick {tick} precedes tick {events[-1].tick}")
        name = obj.get("name")
        if not isinstance(name, str):
            raise MalformedLine(line_no, 'missing or non-string "name"')
        attrs = obj.get("attrs", {})
        if not isinstance(attrs, dict) or not all(isinstance(v, str) for v in attrs.values()):
            raise MalformedLine(line_no, '"attrs" must map strings to strings')
        events.append(GameEvent(tick, name, dict(attrs)))

    tickrate = TICKRATE_128
    if meta is not None:
        horizon = meta["horizon"]
        if isinstance(horizon, bool) or not isinstance(horizon, int) or horizon < 1:
            raise MalformedLine(meta_line, f"invalid horizon {horizon!r}")
        if events and horizon <= events[-1].tick:
            raise MalformedLine(meta_line, f"horizon {horizon} does not exceed last tick")
        if "tickrate" in meta:
            tickrate = _rate_from_json(meta["tickrate"], meta_line)
    elif events:
        horizon = events[-1].tick + 1
    else:
        raise SchemaError("game log has no events and no horizon record")
    return GameEventLog(tuple(events), tickrate, horizon)


def serialize_game_events(log: GameEventLog) -> str:
    buf = io.StringIO()
    for ev in log.events:
        record = {"tick": ev.tick, "name": ev.name, "attrs": dict(ev.attrs)}
        buf.write(json.dumps(record, separators=(",", ":")) + "\n")
    meta = {"horizon": log.horizon, "tickrate": _rate_to_json(log.tickrate)}
    buf.write(json.dumps(meta, separators=(",", ":")) + "\n")
    return buf.getvalue()


def extract_fire_series(log: GameEventLog, player: str,
                        event_name: str = FIRE_EVENT) -> TickEventSeries:
    """Sorted, de-duplicated ticks at which ``player`` fired."""
    ticks = sorted({ev.tick for ev in log.events
                    if ev.name == event_name and ev.attrs.get("player") == player})
    if not ticks:
        players = sorted({ev.attrs.get("player") for ev in log.events
                          if ev.name == event_name and "player" in ev.attrs})
        raise NoSuchPlayer(f"no {event_name} events for player {player!r} "
                           f"(players with events: {', '.join(players) or 'none'})")
    return TickEventSeries(log.tickrate, np.array(ticks, dtype=np.int64), log.horizon)


def extract_lmb_series(mouse: SensorStream, target_rate: Rate = TICKRATE_128,
                       channel: str = LMB_CHANNEL) -> AnchoredBinarySeries:
    """Left-button level series at ``target_rate``.

    Invalid samples count as released. Faster inputs are reduced by any-press
    binning: output bin ``b`` is 1 iff a valid input sample whose nominal time
    lies in ``[b, b+1)`` target ticks is 1.
    """
    if channel not in mouse.channels:
        raise MissingChannel(f"stream {mouse.name!r} has no {channel!r} channel")
    raw = mouse.channels[channel]
    present = ~np.isnan(raw)
    if not np.isin(raw[present], (0.0, 1.0)).all():
        raise SchemaError(f"channel {channel!r} must hold 0 or 1")
    pressed = mouse.validity.astype(bool) & (np.nan_to_num(raw) == 1.0)

    source_rate = mouse.rate
    if source_rate.ticks_per_second < target_rate.ticks_per_second:
        raise UpsamplingUnsupported(
            f"mouse rate {source_rate} Hz is below the target {target_rate} Hz")
    if source_rate == target_rate or len(mouse) == 0:
        return AnchoredBinarySeries(mouse.start, target_rate, pressed.astype(np.uint8))

    # bins per input sample, exact
    ratio = Fraction(mouse.sample_period_ns) * target_rate.ticks_per_second / NS_PER_SECOND
    index = np.arange(len(mouse), dtype=np.int64)
    bins = (index * ratio.numerator) // ratio.denominator
    out = np.zeros(int(bins[-1]) + 1, dtype=np.uint8)
    out[bins[pressed]] = 1
    return AnchoredBinarySeries(mouse.start, target_rate, out)


def detect_gaps(stream: SensorStream) -> GapReport:
    return GapReport(stream.name, true_runs(stream.validity == 0))
