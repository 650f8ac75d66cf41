"""Drifting clocks and periodic discipline, simulated deterministically.

A clock's offset (local reading minus reference time) grows linearly with its
drift rate. A discipline policy corrects it every ``correction_interval_ns``,
either by stepping straight to the (noisy) reference measurement or by slewing
toward it at a bounded rate.

Correction instants are ``k * interval`` for ``k >= 1``. A trace sample taken at
a correction instant records the offset just before the correction is applied,
so the largest drift excursion between corrections shows up in the trace.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .errors import EmptyWindow, InvalidDuration, SchemaError, TraceTooShort
from .timeline import NS_PER_SECOND, AnchoredBinarySeries, round_half_up

NS_PER_MS = 1_000_000
SECONDS_PER_HOUR = 3600

STEP = "step"
SLEW = "slew"


def drift_from_ms_per_hour(ms_per_hour: Union[int, float, str, Fraction]) -> Fraction:
    """Convert a drift quoted in ms/hour into ns of offset per second."""
    if isinstance(ms_per_hour, float):
        ms_per_hour = str(ms_per_hour)
    return Fraction(ms_per_hour) * NS_PER_MS / SECONDS_PER_HOUR


@dataclass(frozen=True)
class ClockModel:
    initial_offset_ns: int = 0
    drift_rate: Fraction = Fraction(0)  # ns of offset per second of true time
    jitter_stddev_ns: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "drift_rate", Fraction(self.drift_rate))
        if self.jitter_stddev_ns < 0:
            raise ValueError("jitter_stddev_ns must be non-negative")

    def drift_ns(self, elapsed_ns: int) -> int:
        """Offset accumulated over ``elapsed_ns`` of true time, rounded to ns."""
        return round_half_up(self.drift_rate * elapsed_ns / NS_PER_SECOND)

    def offset_at(self, t_ns: int) -> int:
        """Noise-free undisciplined offset at true time ``t_ns``."""
        return self.initial_offset_ns + self.drift_ns(t_ns)


@dataclass(frozen=True)
class DisciplinePolicy:
    correction_interval_ns: int
    correction_mode: str = STEP
    slew_rate_limit: Fraction = Fraction(500_000)  # ns/s, unused in step mode
    # reference measurement error; 10 us matches a GPS/PPS-fed Stratum 1 server
    measurement_error_stddev_ns: float = 10_000.0

    def __post_init__(self):
        if self.correction_interval_ns <= 0:
            raise ValueError("correction_interval_ns must be positive")
        if self.correction_mode not in (STEP, SLEW):
            raise ValueError(f"correction_mode must be 'step' or 'slew', got {self.correction_mode!r}")
        object.__setattr__(self, "slew_rate_limit", Fraction(self.slew_rate_limit))
        if self.slew_rate_limit <= 0:
            raise ValueError("slew_rate_limit must be positive")
        if self.measurement_error_stddev_ns < 0:
            raise ValueError("measurement_error_stddev_ns must be non-negative")


@dataclass(frozen=True, eq=False)
class OffsetTrace:
    """Clock-minus-reference offset sampled every ``sample_period_ns`` from t = 0."""

    sample_period_ns: int
    offsets: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.sample_period_ns <= 0:
            raise ValueError("sample_period_ns must be positive")
        arr = np.array(self.offsets, dtype=np.int64).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "offsets", arr)

    def __len__(self) -> int:
        return self.offsets.size

    def __eq__(self, other):
        if not isinstance(other, OffsetTrace):
            return NotImplemented
        return (self.sample_period_ns == other.sample_period_ns
                and np.array_equal(self.offsets, other.offsets))

    @property
    def times_ns(self) -> np.ndarray:
        return np.arange(self.offsets.size, dtype=np.int64) * self.sample_period_ns

    @property
    def span_ns(self) -> int:
        return (self.offsets.size - 1) * self.sample_period_ns

    def offset_at(self, t_ns) -> np.ndarray:
        """Linearly interpolated offset (float ns); raises if ``t_ns`` is past the trace."""
        t = np.asarray(t_ns, dtype=np.float64)
        if t.size and (t.min() < 0 or t.max() > self.span_ns):
            raise TraceTooShort(
                f"trace covers [0, {self.span_ns}] ns, asked for up to {t.max():.0f} ns")
        return np.interp(t, self.times_ns.astype(np.float64), self.offsets.astype(np.float64))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t_ns,offset_ns\n")
        for t, off in zip(self.times_ns.tolist(), self.offsets.tolist()):
            buf.write(f"{t},{off}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, sample_period_ns: Optional[int] = None) -> OffsetTrace:
        lines = text.splitlines()
        if not lines or lines[0].strip() != "t_ns,offset_ns":
            raise SchemaError("offset trace CSV must start with header 't_ns,offset_ns'")
        times, offsets = [], []
        for line_no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise SchemaError(f"line {line_no}: expected 2 cells, got {len(parts)}")
            try:
                times.append(int(parts[0]))
                offsets.append(int(parts[1]))
            except ValueError:
                raise SchemaError(f"line {line_no}: non-integer cell") from None
        if len(times) >= 2:
            period = times[1] - times[0]
        elif sample_period_ns is not None:
            period = sample_period_ns
        else:
            raise SchemaError("cannot infer sample period from fewer than two rows")
        if period <= 0 or any(t != i * period for i, t in enumerate(times)):
            raise SchemaError("t_ns column must be 0, P, 2P, ... for a fixed period P")
        return cls(period, np.array(offsets, dtype=np.int64))


def _exact_drift(model: ClockModel, elapsed: np.ndarray) -> np.ndarray:
    """``model.drift_ns`` over an int64 array, evaluated once per distinct value."""
    uniq, inverse = np.unique(elapsed, return_inverse=True)
    table = np.array([model.drift_ns(int(e)) for e in uniq], dtype=np.int64)
    return table[inverse.reshape(elapsed.shape)]


def simulate(model: ClockModel, policy: Optional[DisciplinePolicy],
             duration_ns: int, sample_period_ns: int) -> OffsetTrace:
    """Offset trace over ``[0, duration_ns]`` sampled every ``sample_period_ns``.

    Random draws come from ``numpy.random.default_rng(model.seed)``: one
    measurement error per correction first, then per-sample jitter.
    """
    if sample_period_ns <= 0:
        raise InvalidDuration(f"sample period must be positive, got {sample_period_ns}")
    if duration_ns < sample_period_ns:
        raise InvalidDuration(
            f"duration {duration_ns} ns is shorter than the sample period {sample_period_ns} ns")

    n = duration_ns // sample_period_ns + 1
    t = np.arange(n, dtype=np.int64) * sample_period_ns
    rng = np.random.default_rng(model.seed)

    if policy is None:
        offsets = model.initial_offset_ns + _exact_drift(model, t)
    else:
        interval = policy.correction_interval_ns
        # index of the last correction strictly before each sample (0 = none yet)
        k = np.maximum(0, (t - 1) // interval)
        n_corrections = int(k[-1])
        errors = np.rint(rng.normal(0.0, policy.measurement_error_stddev_ns, n_corrections)) \
            if policy.measurement_error_stddev_ns > 0 else np.zeros(n_corrections)
        errors = errors.astype(np.int64)
        if policy.correction_mode == STEP:
            base = np.concatenate(([model.initial_offset_ns], errors))
            offsets = base[k] + _exact_drift(model, t - k * interval)
        else:
            offsets = _slew(model, policy, t, k, errors)

    if model.jitter_stddev_ns > 0:
        offsets = offsets + np.rint(rng.normal(0.0, model.jitter_stddev_ns, n)).astype(np.int64)
    return OffsetTrace(sample_period_ns, offsets)


def _slew(model: ClockModel, policy: DisciplinePolicy, t: np.ndarray,
          k: np.ndarray, errors: np.ndarray) -> np.ndarray:
    interval = policy.correction_interval_ns
    limit = float(policy.slew_rate_limit)
    elapsed = t - k * interval
    drift = _exact_drift(model, elapsed).astype(np.float64)
    out = np.empty(t.size, dtype=np.float64)

    current = float(model.initial_offset_ns)  # offset at the start of segment k
    pending = 0.0                              # correction still to remove
    for seg in range(int(k[-1]) + 1):
        sel = k == seg
        if seg > 0:
            pending = current - float(errors[seg - 1])
        removed = np.minimum(limit * elapsed[sel] / NS_PER_SECOND, abs(pending))
        out[sel] = current + drift[sel] - math.copysign(1.0, pending) * removed
        removed_end = min(limit * interval / NS_PER_SECOND, abs(pending))
        current = current + model.drift_ns(interval) - math.copysign(1.0, pending) * removed_end
    return np.rint(out).astype(np.int64)


@dataclass(frozen=True)
class AccuracyStats:
    max_abs_ns: int
    mean_abs_ns: int
    rms_ns: int

    def to_dict(self) -> dict:
        return {"max_abs_ns": self.max_abs_ns, "mean_abs_ns": self.mean_abs_ns,
                "rms_ns": self.rms_ns}


def _round_sqrt(x: Fraction) -> int:
    """Nearest integer to sqrt(x), exact for rational ``x >= 0``."""
    r = math.isqrt(math.floor(x))
    return r + 1 if x >= r * r + r + Fraction(1, 4) else r


def accuracy_stats(trace: OffsetTrace, discard_initial_ns: int = 0) -> AccuracyStats:
    """Max, mean and RMS of |offset| over samples at or after ``discard_initial_ns``."""
    window = trace.offsets[trace.times_ns >= discard_initial_ns]
    if window.size == 0:
        raise EmptyWindow(
            f"discarding {discard_initial_ns} ns leaves no samples of a {trace.span_ns} ns trace")
    absolute = np.abs(window)
    max_abs = int(absolute.max())
    n = window.size
    if max_abs < 2 ** 31 and n < 2 ** 31:
        total, squares = int(absolute.sum()), int(np.dot(absolute, absolute))
    else:
        vals = absolute.tolist()
        total, squares = sum(vals), sum(v * v for v in vals)
    return AccuracyStats(max_abs, round_half_up(Fraction(total, n)),
                         _round_sqrt(Fraction(squares, n)))


def _quantize(offset_ticks: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero."""
    return (np.sign(offset_ticks) * np.floor(np.abs(offset_ticks) + 0.5)).astype(np.int64)


def perturb_series(g: AnchoredBinarySeries, trace: OffsetTrace) -> AnchoredBinarySeries:
    """Displace every sample of ``g`` by the clock offset at its nominal time.

    The trace's t = 0 is ``g.start``. A sample moves by ``round(offset / tick)``
    samples; samples pushed past either end are dropped.
    """
    n = len(g)
    if n == 0:
        return g
    tick = g.rate.tick_ns
    needed = (n - 1) * tick
    if needed > trace.span_ns:
        raise TraceTooShort(
            f"series spans {float(needed):.0f} ns but trace covers only {trace.span_ns} ns")
    ones = g.ones()
    nominal = ones.astype(np.float64) * float(tick)
    moved = ones + _quantize(trace.offset_at(nominal) / float(tick))
    moved = moved[(moved >= 0) & (moved < n)]
    bits = np.zeros(n, dtype=np.uint8)
    bits[moved] = 1
    return AnchoredBinarySeries(g.start, g.rate, bits)
