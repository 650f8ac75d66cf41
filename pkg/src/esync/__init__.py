"""Post-synchronization of tick-indexed game logs with UTC-anchored sensor streams."""

__version__ = "0.1.0"

from .timeline import (AnchoredBinarySeries, Rate, TickEventSeries, UtcInstant,
                       densify, sample_index_to_utc)
from .eventsync import (ScoreProfile, ShiftEstimate, anchor_events, brute_force_profile,
                        estimate_shift, fast_profile)
from .clocksim import (ClockModel, DisciplinePolicy, OffsetTrace, accuracy_stats,
                       perturb_series, simulate)
from .ingest import (GameEventLog, GapReport, SensorStream, detect_gaps,
                     extract_fire_series, extract_lmb_series, parse_game_events,
                     parse_sensor_csv)
from .align import MergedDataset, coverage_report, match_report, merge

__all__ = [
    "AnchoredBinarySeries", "Rate", "TickEventSeries", "UtcInstant", "densify",
    "sample_index_to_utc", "ScoreProfile", "ShiftEstimate", "anchor_events",
    "brute_force_profile", "estimate_shift", "fast_profile", "ClockModel",
    "DisciplinePolicy", "OffsetTrace", "accuracy_stats", "perturb_series", "simulate",
    "GameEventLog", "GapReport", "SensorStream", "detect_gaps", "extract_fire_series",
    "extract_lmb_series", "parse_game_events", "parse_sensor_csv", "MergedDataset",
    "coverage_report", "match_report", "merge",
]
