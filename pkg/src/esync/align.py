"""Merge anchored game events and sensor streams onto one UTC grid.

The grid is the lattice of the mouse series used for anchoring: bin ``k`` sits
at ``g.start + k * tick``. Numeric channels take, per bin, the nearest sample
(a sample exactly half-way between two bins goes to the earlier one). Binary
channels (button states) are OR-ed over every sample whose nearest bin is
``k``. Nothing is interpolated; bins a stream cannot speak for are flagged.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptySeries, RateMismatch, SchemaError
from .eventsync import ShiftEstimate
from .ingest import (FIRE_EVENT, GameEventLog, SensorStream, format_value,
                     true_runs)
from .timeline import (NS_PER_SECOND, AnchoredBinarySeries, Rate,
                       TickEventSeries, UtcInstant)

MEASURED, GAP, OUT_OF_RANGE = 0, 1, 2
PROV_CODES = {MEASURED: "M", GAP: "G", OUT_OF_RANGE: "O"}
_PROV_FROM_CODE = {v: k for k, v in PROV_CODES.items()}
BINARY_CHANNELS = ("lmb", "rmb")
PROV_SUFFIX = "_prov"


@dataclass(frozen=True, eq=False)
class MergedDataset:
    grid_start: UtcInstant
    grid_rate: Rate
    columns: Dict[str, np.ndarray] = field(repr=False)
    provenance: Dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        if list(self.columns) != list(self.provenance):
            raise ValueError("provenance must have exactly the data columns, in order")
        lengths = {a.size for a in self.columns.values()} | {a.size for a in self.provenance.values()}
        if len(lengths) > 1:
            raise ValueError(f"column lengths differ: {sorted(lengths)}")
        for attr, dtype in (("columns", np.float64), ("provenance", np.uint8)):
            frozen = {}
            for key, values in getattr(self, attr).items():
                arr = np.array(values, dtype=dtype).reshape(-1)
                arr.setflags(write=False)
                frozen[key] = arr
            object.__setattr__(self, attr, frozen)

    def __len__(self) -> int:
        return next(iter(self.columns.values())).size if self.columns else 0

    def __eq__(self, other):
        if not isinstance(other, MergedDataset):
            return NotImplemented
        return (self.grid_start == other.grid_start and self.grid_rate == other.grid_rate
                and list(self.columns) == list(other.columns)
                and all(np.array_equal(self.columns[k], other.columns[k], equal_nan=True)
                        and np.array_equal(self.provenance[k], other.provenance[k])
                        for k in self.columns))

    def bin_time(self, k: int) -> UtcInstant:
        return self.grid_start + self.grid_rate.ticks_to_ns(k)

    def to_csv(self) -> str:
        names = list(self.columns)
        buf = io.StringIO()
        buf.write(f"# grid_rate={self.grid_rate}\n")
        buf.write(",".join(["timestamp", *names, *(n + PROV_SUFFIX for n in names)]) + "\n")
        values = [self.columns[n].tolist() for n in names]
        provs = [self.provenance[n].tolist() for n in names]
        for k in range(len(self)):
            cells = [self.bin_time(k).isoformat()]
            cells.extend(format_value(col[k]) for col in values)
            cells.extend(PROV_CODES[p[k]] for p in provs)
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> MergedDataset:
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if len(lines) < 3 or not lines[0].startswith("# grid_rate="):
            raise SchemaError("merged CSV needs a '# grid_rate=' line, a header and rows")
        try:
            rate = Rate(lines[0][len("# grid_rate="):])
        except (ValueError, ZeroDivisionError):
            raise SchemaError(f"line 1: bad grid rate {lines[0]!r}") from None
        header = lines[1].split(",")
        cols = header[1:]
        if header[0] != "timestamp" or len(cols) % 2:
            raise SchemaError("line 2: expected timestamp, data columns, then _prov columns")
        names = cols[:len(cols) // 2]
        if cols[len(names):] != [n + PROV_SUFFIX for n in names]:
            raise SchemaError("line 2: provenance columns must mirror data columns")
        rows = [line.split(",") for line in lines[2:]]
        start = UtcInstant.parse(rows[0][0])
        data = np.empty((len(rows), len(names)), dtype=np.float64)
        prov = np.empty((len(rows), len(names)), dtype=np.uint8)
        for k, cells in enumerate(rows):
            line_no = k + 3
            if len(cells) != len(header):
                raise SchemaError(f"line {line_no}: expected {len(header)} cells")
            if UtcInstant.parse(cells[0]) != start + rate.ticks_to_ns(k):
                raise SchemaError(f"line {line_no}: timestamp off the grid")
            for j in range(len(names)):
                v = cells[1 + j]
                data[k, j] = float(v) if v else np.nan
                try:
                    prov[k, j] = _PROV_FROM_CODE[cells[1 + len(names) + j]]
                except KeyError:
                    raise SchemaError(f"line {line_no}: provenance must be M, G or O") from None
        return cls(start, rate, {n: data[:, j] for j, n in enumerate(names)},
                   {n: prov[:, j] for j, n in enumerate(names)})


class _Lattice:
    """Integer bin arithmetic for the grid ``origin + k * tick``."""

    def __init__(self, origin: UtcInstant, rate: Rate):
        self.origin = origin
        self.rate = rate
        # bins per nanosecond
        per_ns = rate.ticks_per_second / NS_PER_SECOND
        self._a, self._b = per_ns.numerator, per_ns.denominator

    def nearest_bin(self, times_ns: np.ndarray) -> np.ndarray:
        """Nearest bin index; exact half-way points go to the earlier bin."""
        d = np.asarray(times_ns, dtype=np.int64) - self.origin.ns
        # ceil(d*a/b - 1/2) == -floor((b - 2*d*a) / (2b))
        return -((self._b - 2 * d * self._a) // (2 * self._b))

    def bin_time_ns(self, k: np.ndarray) -> np.ndarray:
        tick = self.rate.tick_ns
        if tick.denominator == 1:
            return np.asarray(k, dtype=np.int64) * tick.numerator + self.origin.ns
        return np.array([self.rate.ticks_to_ns(int(v)) for v in np.asarray(k).ravel()],
                        dtype=np.int64) + self.origin.ns


def _stream_extent(stream: SensorStream, lattice: _Lattice) -> Tuple[int, int]:
    ends = np.array([stream.start.ns, stream.sample_time(len(stream) - 1).ns])
    first, last = lattice.nearest_bin(ends)
    return int(first), int(last)


def _numeric_column(values: np.ndarray, valid: np.ndarray, stream: SensorStream,
                    bin_times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # nearest sample per bin; half-way bins take the later sample so that the
    # sample itself lands in the earlier bin
    period = stream.sample_period_ns
    offset = bin_times - stream.start.ns
    j = (2 * offset + period) // (2 * period)
    inside = (j >= 0) & (j < len(stream))
    out = np.full(bin_times.size, np.nan)
    prov = np.full(bin_times.size, OUT_OF_RANGE, dtype=np.uint8)
    jj = j[inside]
    ok = valid[jj]
    out[np.flatnonzero(inside)[ok]] = values[jj[ok]]
    prov[inside] = np.where(ok, MEASURED, GAP)
    return out, prov


def _binary_column(values: np.ndarray, valid: np.ndarray, sample_bins: np.ndarray,
                   size: int) -> Tuple[np.ndarray, np.ndarray]:
    out = np.full(size, np.nan)
    prov = np.full(size, OUT_OF_RANGE, dtype=np.uint8)
    prov[sample_bins] = GAP
    good = sample_bins[valid]
    out[good] = 0.0
    prov[good] = MEASURED
    out[sample_bins[valid & (values == 1.0)]] = 1.0
    return out, prov


def merge(streams: Sequence[SensorStream], game: GameEventLog, est: ShiftEstimate,
          g_meta: AnchoredBinarySeries, player: Optional[str] = None,
          event_names: Iterable[str] = (FIRE_EVENT,),
          binary_channels: Iterable[str] = BINARY_CHANNELS) -> MergedDataset:
    """Put every stream and the anchored game events on the ``g_meta`` grid.

    Game tick ``m`` lands in grid bin ``m + est.shift_s`` (relative to
    ``g_meta.start``). Events are filtered by ``attrs["player"]`` when
    ``player`` is given. Columns are named ``<stream>.<channel>`` and
    ``game.<event>``.
    """
    streams = list(streams)
    if not streams:
        raise EmptySeries("merge needs at least one sensor stream")
    names = [s.name for s in streams]
    if len(set(names)) != len(names):
        raise ValueError(f"stream names must be unique, got {names}")
    if game.tickrate != g_meta.rate:
        raise RateMismatch(f"game tickrate {game.tickrate} Hz differs from grid rate {g_meta.rate} Hz")
    binary_channels = set(binary_channels)
    lattice = _Lattice(g_meta.start, g_meta.rate)
    grid_hz = g_meta.rate.ticks_per_second

    lo, hi = est.shift_s, est.shift_s + game.horizon - 1
    for s in streams:
        if len(s) == 0:
            continue
        has_binary = any(c in binary_channels for c in s.channels)
        if has_binary and s.rate.ticks_per_second < grid_hz:
            raise RateMismatch(
                f"stream {s.name!r} at {s.rate} Hz is too slow to bin button states "
                f"onto the {g_meta.rate} Hz grid")
        first, last = _stream_extent(s, lattice)
        lo, hi = min(lo, first), max(hi, last)

    size = hi - lo + 1
    grid_bins = np.arange(lo, hi + 1, dtype=np.int64)
    bin_times = lattice.bin_time_ns(grid_bins)
    columns: Dict[str, np.ndarray] = {}
    provenance: Dict[str, np.ndarray] = {}

    for s in streams:
        valid = s.validity.astype(bool)
        sample_bins = None
        if len(s) and any(c in binary_channels for c in s.channels):
            times = s.start.ns + np.arange(len(s), dtype=np.int64) * s.sample_period_ns
            sample_bins = lattice.nearest_bin(times) - lo
        for channel, values in s.channels.items():
            key = f"{s.name}.{channel}"
            if len(s) == 0:
                columns[key] = np.full(size, np.nan)
                provenance[key] = np.full(size, OUT_OF_RANGE, dtype=np.uint8)
            elif channel in binary_channels:
                columns[key], provenance[key] = _binary_column(values, valid, sample_bins, size)
            else:
                columns[key], provenance[key] = _numeric_column(values, valid, s, bin_times)

    game_lo = est.shift_s - lo
    for event_name in event_names:
        col = np.zeros(size)
        prov = np.full(size, OUT_OF_RANGE, dtype=np.uint8)
        prov[game_lo:game_lo + game.horizon] = MEASURED
        col[prov != MEASURED] = np.nan
        ticks = [ev.tick for ev in game.events if ev.name == event_name
                 and (player is None or ev.attrs.get("player") == player)]
        col[np.array(ticks, dtype=np.int64) + game_lo] = 1.0
        columns[f"game.{event_name}"] = col
        provenance[f"game.{event_name}"] = prov

    return MergedDataset(lattice.origin + g_meta.rate.ticks_to_ns(lo), g_meta.rate,
                         columns, provenance)


@dataclass(frozen=True)
class MatchReport:
    matched: int
    unmatched_fire: List[int]
    spurious_presses: int

    def to_dict(self) -> dict:
        return {"matched": self.matched, "spurious_presses": self.spurious_presses,
                "unmatched_fire": list(self.unmatched_fire)}


def match_report(fire: TickEventSeries, g: AnchoredBinarySeries,
                 est: ShiftEstimate) -> MatchReport:
    """Which fire events found a press under the estimated shift, and how many presses were extra."""
    idx = fire.event_ticks + est.shift_s
    inside = (idx >= 0) & (idx < len(g))
    hit = np.zeros(idx.size, dtype=bool)
    hit[inside] = g.bits[idx[inside]] == 1
    aligned = np.zeros(len(g), dtype=bool)
    aligned[idx[inside]] = True
    spurious = int(np.count_nonzero((g.bits == 1) & ~aligned))
    return MatchReport(int(hit.sum()), fire.event_ticks[~hit].tolist(), spurious)


@dataclass(frozen=True)
class CoverageReport:
    measured_fraction: Dict[str, float]
    gap_intervals: Dict[str, List[Tuple[int, int]]]
    # fraction of A's gap bins where B is measured; None when A has no gaps
    pair_coverage: Dict[Tuple[str, str], Optional[float]]

    def to_dict(self) -> dict:
        return {
            "columns": {
                name: {"measured_fraction": self.measured_fraction[name],
                       "gap_intervals": [list(iv) for iv in self.gap_intervals[name]]}
                for name in self.measured_fraction
            },
            "pairs": [{"a": a, "b": b, "b_measured_during_a_gaps": frac}
                      for (a, b), frac in self.pair_coverage.items()],
        }


def coverage_report(dataset: MergedDataset) -> CoverageReport:
    n = len(dataset)
    measured = {k: p == MEASURED for k, p in dataset.provenance.items()}
    gaps = {k: p == GAP for k, p in dataset.provenance.items()}
    fractions = {k: (float(m.sum()) / n if n else 0.0) for k, m in measured.items()}
    intervals = {k: true_runs(g) for k, g in gaps.items()}
    pairs: Dict[Tuple[str, str], Optional[float]] = {}
    for a in dataset.columns:
        n_gap = int(gaps[a].sum())
        for b in dataset.columns:
            if a == b:
                continue
            pairs[(a, b)] = (float(np.count_nonzero(gaps[a] & measured[b])) / n_gap
                             if n_gap else None)
    return CoverageReport(fractions, intervals, pairs)
