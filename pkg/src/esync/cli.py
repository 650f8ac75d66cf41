"""Batch command line: ``esync sync | merge | simulate-clock | generate-fixture``.

Exit codes: 0 success, 1 input or processing error, 2 ambiguous shift.
"""
from __future__ import annotations

import json
import math
import sys
from pathlib import Path
from typing import List, Optional

import click

from . import __version__
from .align import coverage_report, match_report, merge
from .clocksim import (NS_PER_MS, SECONDS_PER_HOUR, ClockModel, DisciplinePolicy,
                       accuracy_stats, drift_from_ms_per_hour, simulate)
from .errors import MalformedLine, SyncError
from .eventsync import DEFAULT_MIN_EVENTS, ShiftEstimate, estimate_shift
from .fixtures import generate_session, write_session
from .ingest import (LMB_CHANNEL, extract_fire_series, extract_lmb_series,
                     parse_game_events, parse_sensor_csv)
from .timeline import NS_PER_SECOND, AnchoredBinarySeries, Rate, UtcInstant

EXIT_OK, EXIT_ERROR, EXIT_AMBIGUOUS = 0, 1, 2
# 10 minutes of settling before disciplined-clock statistics count
DEFAULT_DISCARD_S = 600


class CommandFailed(Exception):
    pass


def _fail(message: str):
    raise CommandFailed(message)


def _dump_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        _fail(f"{path}: {exc.strerror or exc}")


def _load_stream(path: Path):
    try:
        return parse_sensor_csv(_read(path), name=path.stem)
    except SyncError as exc:
        _fail(f"{path}: {exc}")


def _load_game(path: Path):
    try:
        return parse_game_events(_read(path))
    except MalformedLine as exc:
        _fail(f"{path}:{exc.line_no}: {exc.reason}")
    except SyncError as exc:
        _fail(f"{path}: {exc}")


def _run(fn, *args, **kwargs) -> int:
    try:
        return fn(*args, **kwargs)
    except CommandFailed as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ERROR
    except SyncError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_ERROR


class _Group(click.Group):
    """Maps click usage errors to exit code 1 so that 2 only ever means ambiguity."""

    def main(self, args=None, prog_name=None, **extra):
        extra.pop("standalone_mode", None)
        try:
            return super().main(args=args, prog_name=prog_name, standalone_mode=False, **extra)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_ERROR)
        except click.Abort:
            click.echo("aborted", err=True)
            sys.exit(EXIT_ERROR)


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="esync")
def cli():
    """Synchronize game event logs with UTC-anchored sensor streams."""


def cmd_sync(game: Path, mouse: Path, player: str, min_events: int, out: Path) -> int:
    log = _load_game(game)
    stream = _load_stream(mouse)
    try:
        fire = extract_fire_series(log, player)
        g = extract_lmb_series(stream, log.tickrate)
        est = estimate_shift(fire, g, min_events=min_events)
    except SyncError as exc:
        _fail(f"{type(exc).__name__}: {exc}")
    report = est.to_dict()
    report.update({
        "player": player,
        "game": str(game),
        "mouse": str(mouse),
        "fire_events": len(fire),
        "g_start": g.start.isoformat(),
        "g_rate": str(g.rate),
        "g_length": len(g),
    })
    _dump_json(out, report)
    if est.ambiguous:
        click.echo(f"ambiguous: {est.tie_count} shifts tie at {est.match_count} matches "
                   f"(smallest {est.shift_s})", err=True)
        return EXIT_AMBIGUOUS
    click.echo(f"shift {est.shift_s} ticks, {est.match_count}/{len(fire)} fires matched, "
               f"tick 0 at {est.anchor_utc_of_tick0}")
    return EXIT_OK


@cli.command("sync")
@click.option("--game", type=click.Path(path_type=Path), required=True)
@click.option("--mouse", type=click.Path(path_type=Path), required=True)
@click.option("--player", required=True)
@click.option("--min-events", type=click.IntRange(min=1), default=DEFAULT_MIN_EVENTS,
              show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def sync_command(**kwargs):
    """Recover the UTC anchor of a game log from the mouse button series."""
    sys.exit(_run(cmd_sync, **kwargs))


def cmd_merge(shift_report: Path, streams: List[Path], game: Path, out: Path,
              report: Optional[Path]) -> int:
    try:
        shift = json.loads(_read(shift_report))
        est = ShiftEstimate.from_dict(shift)
        g_meta = AnchoredBinarySeries(UtcInstant.parse(shift["g_start"]),
                                      Rate(shift["g_rate"]), [])
        player = shift.get("player")
    except (KeyError, ValueError, TypeError) as exc:
        _fail(f"{shift_report}: not a valid shift report ({exc})")
    if not streams:
        _fail("at least one --stream is required")
    log = _load_game(game)
    loaded = [_load_stream(p) for p in streams]
    try:
        dataset = merge(loaded, log, est, g_meta, player=player)
    except SyncError as exc:
        _fail(f"{type(exc).__name__}: {exc}")

    summary = {"shift": est.to_dict(), "coverage": coverage_report(dataset).to_dict(),
               "rows": len(dataset), "grid_start": dataset.grid_start.isoformat(),
               "grid_rate": str(dataset.grid_rate)}
    mouse = next((s for s in loaded if LMB_CHANNEL in s.channels), None)
    if mouse is not None and player is not None:
        try:
            fire = extract_fire_series(log, player)
            g = extract_lmb_series(mouse, log.tickrate)
            summary["match"] = match_report(fire, g, est).to_dict()
        except SyncError as exc:
            _fail(f"{type(exc).__name__}: {exc}")

    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dataset.to_csv(), encoding="utf-8")
    _dump_json(report or out.with_suffix(".json"), summary)
    click.echo(f"merged {len(loaded)} stream(s) onto {len(dataset)} grid rows")
    return EXIT_OK


@cli.command("merge")
@click.option("--shift-report", type=click.Path(path_type=Path), required=True)
@click.option("--stream", "streams", type=click.Path(path_type=Path), multiple=True)
@click.option("--game", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="merged CSV")
@click.option("--report", type=click.Path(path_type=Path), default=None,
              help="coverage/match JSON [default: OUT with .json suffix]")
def merge_command(streams, **kwargs):
    """Put all streams and the anchored game events on one 128 Hz grid."""
    sys.exit(_run(cmd_merge, streams=list(streams), **kwargs))


def cmd_simulate_clock(drift_ms_per_hour: float, interval_s: int, mode: str,
                       jitter_us: float, error_us: float, hours: float, seed: int,
                       no_discipline: bool, sample_s: int, discard_s: Optional[int],
                       out: Path, stats: Optional[Path]) -> int:
    for name, value in (("--drift-ms-per-hour", drift_ms_per_hour), ("--hours", hours),
                        ("--jitter-us", jitter_us), ("--error-us", error_us)):
        if not math.isfinite(value):
            _fail(f"{name} must be finite")
    if hours <= 0:
        _fail("--hours must be positive")
    duration = round(hours * SECONDS_PER_HOUR * NS_PER_SECOND)
    model = ClockModel(drift_rate=drift_from_ms_per_hour(drift_ms_per_hour),
                       jitter_stddev_ns=jitter_us * 1000, seed=seed)
    policy = None if no_discipline else DisciplinePolicy(
        interval_s * NS_PER_SECOND, correction_mode=mode,
        measurement_error_stddev_ns=error_us * 1000)
    trace = simulate(model, policy, duration, sample_s * NS_PER_SECOND)
    if discard_s is None:
        discard_s = 0 if policy is None else DEFAULT_DISCARD_S
    discard_ns = discard_s * NS_PER_SECOND
    if discard_ns > trace.span_ns:
        discard_ns = 0
    result = accuracy_stats(trace, discard_ns)

    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(trace.to_csv(), encoding="utf-8")
    payload = result.to_dict()
    payload.update({
        "final_offset_ns": int(trace.offsets[-1]),
        "max_abs_ms": result.max_abs_ns / NS_PER_MS,
        "final_offset_ms": int(trace.offsets[-1]) / NS_PER_MS,
        "discard_ns": discard_ns,
        "samples": len(trace),
        "disciplined": policy is not None,
        "seed": seed,
    })
    _dump_json(stats or out.with_suffix(".json"), payload)
    click.echo(f"final offset {payload['final_offset_ms']:.3f} ms, "
               f"max |offset| {payload['max_abs_ms']:.3f} ms")
    return EXIT_OK


@cli.command("simulate-clock")
@click.option("--drift-ms-per-hour", type=float, required=True)
@click.option("--interval-s", type=click.IntRange(min=1), default=600, show_default=True,
              help="seconds between corrections")
@click.option("--mode", type=click.Choice(["step", "slew"]), default="step", show_default=True)
@click.option("--jitter-us", type=click.FloatRange(min=0), default=0.0, show_default=True,
              help="white reading noise")
@click.option("--error-us", type=click.FloatRange(min=0), default=0.0, show_default=True,
              help="reference measurement error per correction")
@click.option("--hours", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--no-discipline", is_flag=True, help="never correct the clock")
@click.option("--sample-s", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--discard-s", type=click.IntRange(min=0), default=None,
              help="settling time excluded from stats [default: 600 if disciplined, else 0]")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="trace CSV")
@click.option("--stats", type=click.Path(path_type=Path), default=None,
              help="stats JSON [default: OUT with .json suffix]")
def simulate_clock_command(**kwargs):
    """Simulate a drifting, optionally disciplined clock."""
    sys.exit(_run(cmd_simulate_clock, **kwargs))


def cmd_generate_fixture(seed: int, shift_ticks: int, fires: int, dropout: float,
                         spurious: int, gaps: int, player: str, timing_noise: bool,
                         out_dir: Path) -> int:
    try:
        session = generate_session(seed, shift_ticks, fires=fires, dropout=dropout,
                                   spurious=spurious, gaps=gaps, player=player,
                                   timing_noise=timing_noise)
    except ValueError as exc:
        _fail(str(exc))
    write_session(session, out_dir)
    click.echo(f"wrote session (shift {shift_ticks}) to {out_dir}")
    return EXIT_OK


@cli.command("generate-fixture")
@click.option("--seed", type=int, required=True)
@click.option("--shift-ticks", type=int, required=True)
@click.option("--fires", type=click.IntRange(min=1), default=40, show_default=True)
@click.option("--dropout", type=click.FloatRange(0.0, 1.0, max_open=True), default=0.0,
              show_default=True, help="fraction of shots with no recorded press")
@click.option("--spurious", type=click.IntRange(min=0), default=0, show_default=True,
              help="extra presses that fired nothing")
@click.option("--gaps", type=click.IntRange(min=0), default=0, show_default=True,
              help="mouse dropout intervals")
@click.option("--player", default="p1", show_default=True)
@click.option("--timing-noise", is_flag=True,
              help="sub-tick phase plus disciplined clock error on both loggers")
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def generate_fixture_command(**kwargs):
    """Write a synthetic session with known ground truth."""
    sys.exit(_run(cmd_generate_fixture, **kwargs))


def main(argv=None):
    cli.main(args=argv, prog_name="esync")


if __name__ == "__main__":
    main()
