"""Exact time arithmetic and the two series types everything else is built on.

Time is an integer count of nanoseconds since the Unix epoch. Rates are exact
rationals, so a 128 Hz tick is exactly 7_812_500 ns and never drifts through
float rounding.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from typing import Iterable, Union

import numpy as np

from .errors import TimestampFormatError

NS_PER_SECOND = 1_000_000_000

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_RFC3339 = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,9}))?Z$"
)


def round_half_up(x: Fraction) -> int:
    """Nearest integer, halves rounded toward +inf."""
    return (x.numerator * 2 + x.denominator) // (x.denominator * 2)


@dataclass(frozen=True, order=True)
class UtcInstant:
    """A point on the UTC axis, in integer nanoseconds since the epoch."""

    ns: int

    def __post_init__(self):
        if isinstance(self.ns, bool) or not isinstance(self.ns, (int, np.integer)):
            raise TypeError(f"UtcInstant needs integer ns, got {type(self.ns).__name__}")
        object.__setattr__(self, "ns", int(self.ns))

    def __add__(self, duration_ns: int) -> UtcInstant:
        if isinstance(duration_ns, UtcInstant):
            return NotImplemented
        return UtcInstant(self.ns + int(duration_ns))

    def __sub__(self, other):
        if isinstance(other, UtcInstant):
            return self.ns - other.ns
        return UtcInstant(self.ns - int(other))

    @classmethod
    def parse(cls, text: str) -> UtcInstant:
        """Parse ``YYYY-MM-DDTHH:MM:SS[.fraction]Z`` (up to 9 fractional digits)."""
        m = _RFC3339.match(text.strip())
        if m is None:
            raise TimestampFormatError(f"not an RFC 3339 UTC timestamp: {text!r}")
        year, month, day, hour, minute, second = (int(v) for v in m.groups()[:6])
        frac = m.group(7) or ""
        try:
            wall = datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)
        except ValueError as exc:
            raise TimestampFormatError(f"{text!r}: {exc}") from None
        seconds = (wall - _EPOCH) // timedelta(seconds=1)
        return cls(seconds * NS_PER_SECOND + int(frac.ljust(9, "0") or 0))

    def isoformat(self) -> str:
        """Render with exactly nine fractional digits, e.g. ``2019-03-01T12:00:00.007812500Z``."""
        seconds, frac = divmod(self.ns, NS_PER_SECOND)
        wall = _EPOCH + timedelta(seconds=seconds)
        # %Y is not zero-padded below year 1000 on every platform
        return f"{wall.year:04d}-{wall:%m-%dT%H:%M:%S}.{frac:09d}Z"

    def __str__(self) -> str:
        return self.isoformat()


@dataclass(frozen=True)
class Rate:
    """Samples (or ticks) per second as an exact positive rational."""

    ticks_per_second: Fraction

    def __init__(self, ticks_per_second: Union[int, str, Fraction]):
        value = Fraction(ticks_per_second)
        if value <= 0:
            raise ValueError(f"rate must be positive, got {value}")
        object.__setattr__(self, "ticks_per_second", value)

    @classmethod
    def from_period_ns(cls, period_ns: int) -> Rate:
        if period_ns <= 0:
            raise ValueError(f"sample period must be positive, got {period_ns}")
        return cls(Fraction(NS_PER_SECOND, period_ns))

    @property
    def tick_ns(self) -> Fraction:
        """Exact tick duration in nanoseconds (7_812_500 for 128 Hz)."""
        return NS_PER_SECOND / self.ticks_per_second

    def ticks_to_ns(self, ticks: int) -> int:
        """Duration of ``ticks`` ticks, exact when ``tick_ns`` is integral, else nearest ns."""
        return round_half_up(ticks * self.tick_ns)

    def __str__(self) -> str:
        return str(self.ticks_per_second)


TICKRATE_128 = Rate(128)


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AnchoredBinarySeries:
    """Fixed-rate 0/1 samples whose first sample sits at a known UTC instant.

    Reads outside ``[0, N-1]`` are 0.
    """

    start: UtcInstant
    rate: Rate
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ValueError("AnchoredBinarySeries bits must be 0 or 1")
        object.__setattr__(self, "bits", _frozen_array(bits, np.uint8))

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other):
        if not isinstance(other, AnchoredBinarySeries):
            return NotImplemented
        return (self.start == other.start and self.rate == other.rate
                and np.array_equal(self.bits, other.bits))

    def at(self, t: int) -> int:
        return int(self.bits[t]) if 0 <= t < self.bits.size else 0

    def ones(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def end(self) -> UtcInstant:
        """Instant one sample past the last one."""
        return sample_index_to_utc(self, len(self))


@dataclass(frozen=True, eq=False)
class TickEventSeries:
    """Sparse set of event ticks on a game's tick axis, with no UTC anchor.

    ``horizon`` is the number of ticks covered; trailing empty ticks are allowed,
    so it is stored rather than inferred.
    """

    rate: Rate
    event_ticks: np.ndarray
    horizon: int

    def __post_init__(self):
        ticks = _frozen_array(self.event_ticks, np.int64)
        if self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if ticks.size:
            if ticks[0] < 0:
                raise ValueError("event ticks must be non-negative")
            if np.any(np.diff(ticks) <= 0):
                raise ValueError("event ticks must be strictly increasing")
            if ticks[-1] >= self.horizon:
                raise ValueError(
                    f"event tick {int(ticks[-1])} outside horizon {self.horizon}")
        object.__setattr__(self, "event_ticks", ticks)
        object.__setattr__(self, "horizon", int(self.horizon))

    def __len__(self) -> int:
        return self.event_ticks.size

    def __eq__(self, other):
        if not isinstance(other, TickEventSeries):
            return NotImplemented
        return (self.rate == other.rate and self.horizon == other.horizon
                and np.array_equal(self.event_ticks, other.event_ticks))

    @classmethod
    def from_dense(cls, bits: Iterable[int], rate: Rate = TICKRATE_128) -> TickEventSeries:
        bits = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ValueError("dense fire indicator must be 0 or 1")
        return cls(rate, np.flatnonzero(bits), bits.size)


def sample_index_to_utc(series: AnchoredBinarySeries, t: int) -> UtcInstant:
    """UTC instant of sample ``t``; affine in ``t`` for any integer, in range or not."""
    return series.start + series.rate.ticks_to_ns(int(t))


def densify(f: TickEventSeries) -> np.ndarray:
    """Dense 0/1 indicator of length ``f.horizon``."""
    out = np.zeros(f.horizon, dtype=np.uint8)
    out[f.event_ticks] = 1
    return out
