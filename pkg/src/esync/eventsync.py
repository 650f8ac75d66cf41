"""Recover the UTC anchor of a tick-indexed game log.

The game log gives the ticks ``m`` at which a player fired (``f``); the mouse
logger gives a UTC-anchored 0/1 series of left-button state (``g``) at the same
rate. The anchor is the integer shift ``s`` maximising

    count(s) = sum_m f[m] * g[m + s],    s in [-M+1, N-1],

so game tick ``m`` happened at mouse sample ``m + s``. Two routes compute the
whole score profile: a direct pairwise count and an FFT convolution of ``f``
with the index-reversed ``g``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import EmptySeries, InsufficientEvents, NoPresses, RateMismatch
from .timeline import (AnchoredBinarySeries, TickEventSeries, UtcInstant,
                       densify, sample_index_to_utc)

DEFAULT_MIN_EVENTS = 10
MAX_FFT_LENGTH = 2 ** 26
ROUNDING_RESIDUAL_LIMIT = 0.25

# caps the pair matrix materialised per chunk by the direct route
_PAIR_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class ScoreProfile:
    """Match count at every candidate shift, ``first_shift`` .. ``first_shift + len - 1``."""

    first_shift: int
    counts: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, ScoreProfile):
            return NotImplemented
        return self.first_shift == other.first_shift and np.array_equal(self.counts, other.counts)

    def __len__(self) -> int:
        return self.counts.size

    @property
    def shifts(self) -> np.ndarray:
        return np.arange(self.first_shift, self.first_shift + self.counts.size)

    def count_at(self, shift: int) -> int:
        k = shift - self.first_shift
        return int(self.counts[k]) if 0 <= k < self.counts.size else 0


@dataclass(frozen=True)
class ShiftEstimate:
    shift_s: int
    match_count: int
    runner_up_count: int
    tie_count: int
    anchor_utc_of_tick0: UtcInstant
    confidence: float

    @property
    def ambiguous(self) -> bool:
        return self.tie_count > 1

    def to_dict(self) -> dict:
        return {
            "anchor_utc_of_tick0": self.anchor_utc_of_tick0.isoformat(),
            "confidence": self.confidence,
            "match_count": self.match_count,
            "runner_up_count": self.runner_up_count,
            "shift_s": self.shift_s,
            "tie_count": self.tie_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ShiftEstimate:
        return cls(
            shift_s=int(data["shift_s"]),
            match_count=int(data["match_count"]),
            runner_up_count=int(data["runner_up_count"]),
            tie_count=int(data["tie_count"]),
            anchor_utc_of_tick0=UtcInstant.parse(data["anchor_utc_of_tick0"]),
            confidence=float(data["confidence"]),
        )


def _check_inputs(f: TickEventSeries, g: AnchoredBinarySeries) -> None:
    if f.rate != g.rate:
        raise RateMismatch(
            f"game rate {f.rate} Hz differs from mouse series rate {g.rate} Hz; resample first")
    if f.horizon == 0 or len(g) == 0:
        raise EmptySeries("both series need at least one sample")


def brute_force_profile(f: TickEventSeries, g: AnchoredBinarySeries) -> ScoreProfile:
    """Score profile by enumerating every (fire tick, press index) pair.

    Each pair ``(m, n)`` contributes one match at shift ``n - m``.
    """
    _check_inputs(f, g)
    first = -f.horizon + 1
    counts = np.zeros(f.horizon + len(g) - 1, dtype=np.int64)
    ticks = f.event_ticks
    ones = g.ones()
    if ticks.size == 0 or ones.size == 0:
        return ScoreProfile(first, counts)
    rows = max(1, _PAIR_CHUNK // ones.size)
    for lo in range(0, ticks.size, rows):
        diffs = np.subtract.outer(ones, ticks[lo:lo + rows]).ravel()
        counts += np.bincount(diffs - first, minlength=counts.size)
    return ScoreProfile(first, counts)


def count_at_shift(f: TickEventSeries, g: AnchoredBinarySeries, shift: int) -> int:
    """Matches at one shift, read straight off the two series."""
    idx = f.event_ticks + shift
    idx = idx[(idx >= 0) & (idx < len(g))]
    return int(g.bits[idx].sum(dtype=np.int64))


def _fft_length(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def fast_profile(f: TickEventSeries, g: AnchoredBinarySeries) -> ScoreProfile:
    """Score profile via one real FFT convolution, O((M+N) log(M+N)).

    With ``rev[j] = g[N-1-j]``, ``conv(f, rev)[i]`` is the count at shift
    ``N-1-i``, so the profile over ascending shifts is the reversed convolution.
    Falls back to the direct route if float error could flip a rounded count.
    """
    _check_inputs(f, g)
    M, N = f.horizon, len(g)
    first = -M + 1
    out_len = M + N - 1
    if len(f) == 0 or not g.bits.any():
        return ScoreProfile(first, np.zeros(out_len, dtype=np.int64))
    if out_len > MAX_FFT_LENGTH:
        return brute_force_profile(f, g)

    n_fft = _fft_length(out_len)
    dense_f = densify(f).astype(np.float64)
    rev_g = g.bits[::-1].astype(np.float64)
    spectrum = np.fft.rfft(dense_f, n_fft) * np.fft.rfft(rev_g, n_fft)
    conv = np.fft.irfft(spectrum, n_fft)[:out_len]
    rounded = np.rint(conv)
    if np.max(np.abs(conv - rounded)) >= ROUNDING_RESIDUAL_LIMIT:
        return brute_force_profile(f, g)
    return ScoreProfile(first, rounded[::-1].astype(np.int64))


def summarize_profile(profile: ScoreProfile) -> Tuple[int, int, int, int]:
    """(best shift, best count, runner-up count, number of shifts tied at best).

    The best shift is the smallest one attaining the maximum.
    """
    counts = profile.counts
    k = int(np.argmax(counts))
    best = int(counts[k])
    ties = int(np.count_nonzero(counts == best))
    if counts.size > 1:
        runner_up = int(max(counts[:k].max(initial=0), counts[k + 1:].max(initial=0)))
    else:
        runner_up = 0
    return profile.first_shift + k, best, runner_up, ties


def estimate_shift(f: TickEventSeries, g: AnchoredBinarySeries,
                   min_events: int = DEFAULT_MIN_EVENTS,
                   method: str = "fast") -> ShiftEstimate:
    """Best alignment of fire ticks onto the press series.

    Ties are not an error: the smallest maximising shift is returned with
    ``tie_count > 1`` and confidence 0.
    """
    if min_events < 1:
        raise ValueError("min_events must be positive")
    _check_inputs(f, g)
    if len(f) < min_events:
        raise InsufficientEvents(
            f"{len(f)} fire events, need at least {min_events} for a reliable alignment")
    if not g.bits.any():
        raise NoPresses("mouse series contains no button presses")

    if method == "fast":
        profile = fast_profile(f, g)
    elif method == "brute":
        profile = brute_force_profile(f, g)
    else:
        raise ValueError(f"unknown method {method!r}")

    shift, best, runner_up, ties = summarize_profile(profile)
    confidence = 0.0 if ties > 1 else (best - runner_up) / max(best, 1)
    return ShiftEstimate(
        shift_s=shift,
        match_count=best,
        runner_up_count=runner_up,
        tie_count=ties,
        anchor_utc_of_tick0=sample_index_to_utc(g, shift),
        confidence=confidence,
    )


def anchor_events(f: TickEventSeries, est: ShiftEstimate,
                  g: AnchoredBinarySeries) -> List[Tuple[int, UtcInstant]]:
    """UTC instant of every event tick under the estimated shift."""
    return [(int(m), sample_index_to_utc(g, int(m) + est.shift_s)) for m in f.event_ticks]
