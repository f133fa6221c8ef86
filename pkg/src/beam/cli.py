"""Command-line entry points.

Exit codes: 0 ok, 1 domain failure (validation, divergence, component
error), 2 usage or I/O problems.  BEAM_OUT provides the default output
directory for commands that write or read run artifacts.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import metrics as metrics_mod
from .events import DecodeError, read_log
from .loop import Runner, replay as replay_run
from .oracle import LogTooLarge, match_oracle
from .patterns import PatternError, compile_pattern
from .san import SanParseError, parse_san
from .sim import ConfigError, load_config
from .tables import load_table


def _load_model(path_text: str):
    path = Path(path_text)
    if not path.is_file():
        click.echo(f"model file not found: {path}", err=True)
        sys.exit(2)
    return parse_san(path.read_text(encoding="utf-8"), base_dir=path.parent)


@click.group()
def main():
    """Business-awareness runtime: validate models, run and inspect scenarios."""


@main.command()
@click.argument("san_file")
def validate(san_file):
    """Parse and validate a model file; diagnostics go to stderr."""
    try:
        _load_model(san_file)
    except SanParseError as exc:
        for diag in exc.diagnostics:
            click.echo(str(diag), err=True)
        sys.exit(1)
    sys.exit(0)


@main.command()
@click.option("--model", "model_file", required=True, help="SAN model file")
@click.option("--scenario", "scenario_file", required=True, help="scenario YAML")
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--ticks", default=320, show_default=True, type=int)
@click.option("--out", "out_dir", envvar="BEAM_OUT", default="out", show_default=True)
@click.option("--auto-apply/--no-auto-apply", default=None,
              help="force manual directives to execute without an operator")
@click.option("--serve", is_flag=True, help="stream frames to dashboard clients")
@click.option("--port", default=8765, show_default=True, type=int)
@click.option("--pace-ms", default=0, show_default=True, type=int,
              help="wall milliseconds per tick (serve mode pacing)")
@click.option("--serve-wait", default=0.0, show_default=True, type=float,
              help="seconds to wait for a dashboard client before starting")
def run(model_file, scenario_file, seed, ticks, out_dir, auto_apply, serve, port,
        pace_ms, serve_wait):
    """Run the closed loop and write events/audit/context/metrics files."""
    try:
        model = _load_model(model_file)
        scenario_path = Path(scenario_file)
        if not scenario_path.is_file():
            click.echo(f"scenario file not found: {scenario_path}", err=True)
            sys.exit(2)
        config = load_config(scenario_path)
    except (SanParseError, ConfigError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)

    gateway = None
    if serve:
        from .serve import Gateway
        gateway = Gateway(port=port)
        gateway.start()
        if pace_ms == 0:
            pace_ms = 200
        if serve_wait > 0:
            gateway.wait_for_client(serve_wait)
    try:
        runner = Runner(model, config, seed=seed, auto_apply=auto_apply, gateway=gateway)
        runner.run(ticks, pace_ms=pace_ms)
        summary = runner.write_outputs(out_dir)
    except Exception as exc:                                    # noqa: BLE001
        click.echo(f"run failed: {exc}", err=True)
        sys.exit(1)
    finally:
        if gateway is not None:
            gateway.stop()
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    sys.exit(0)


@main.command()
@click.option("--pattern", "pattern_text", required=True,
              help="PATTERN declaration or a file containing one")
@click.option("--log", "log_file", required=True, help="event log file (max 50 events)")
@click.option("--tables", "tables_dir", default=None, help="directory of .tsv lookup tables")
def oracle(pattern_text, log_file, tables_dir):
    """Print brute-force oracle detections for a pattern over a log."""
    source = pattern_text
    if Path(pattern_text).is_file():
        source = Path(pattern_text).read_text(encoding="utf-8").strip()
    log_path = Path(log_file)
    if not log_path.is_file():
        click.echo(f"log file not found: {log_path}", err=True)
        sys.exit(2)
    tables = {}
    if tables_dir:
        for path in sorted(Path(tables_dir).glob("*.tsv")):
            tables[path.stem] = load_table(path.stem, path)
    try:
        pattern = compile_pattern(source)
        events = read_log(log_path)
        detections = match_oracle(pattern, events, tables=tables)
    except (PatternError, LogTooLarge, DecodeError, ValueError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    from .events import encode
    for det in detections:
        click.echo(encode(det))
    sys.exit(0)


@main.command()
@click.option("--out", "out_dir", envvar="BEAM_OUT", default="out", show_default=True)
def metrics(out_dir):
    """Recompute run metrics purely from the log files."""
    out = Path(out_dir)
    events_path = out / "events.log"
    audit_path = out / "audit.log"
    if not events_path.is_file() or not audit_path.is_file():
        click.echo(f"no run logs under {out}", err=True)
        sys.exit(2)
    try:
        summary = metrics_mod.compute(
            events_path.read_text(encoding="utf-8").splitlines(),
            audit_path.read_text(encoding="utf-8").splitlines(),
        )
    except metrics_mod.CorruptLog as exc:
        click.echo(f"corrupt log: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    sys.exit(0)


@main.command()
@click.option("--model", "model_file", required=True)
@click.option("--log", "log_file", required=True, help="recorded events.log")
def replay(model_file, log_file):
    """Re-drive the engine from a recorded event log; prints the audit log."""
    log_path = Path(log_file)
    if not log_path.is_file():
        click.echo(f"log file not found: {log_path}", err=True)
        sys.exit(2)
    try:
        model = _load_model(model_file)
        recorded = read_log(log_path)
        pipeline = replay_run(model, recorded)
    except (SanParseError, DecodeError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    except Exception as exc:                                    # noqa: BLE001
        click.echo(f"replay diverged: {exc}", err=True)
        sys.exit(1)
    for line in pipeline.audit_lines():
        click.echo(line)
    sys.exit(0)


@main.command()
@click.option("--out", "out_dir", envvar="BEAM_OUT", default="out", show_default=True)
@click.option("--audience", default=None, help="only this audience's feed")
def feed(out_dir, audience):
    """Render the notification topics of a recorded run as a plain feed."""
    events_path = Path(out_dir) / "events.log"
    if not events_path.is_file():
        click.echo(f"no run logs under {out_dir}", err=True)
        sys.exit(2)
    for event in read_log(events_path):
        if not event.topic.startswith("notify."):
            continue
        if audience and event.attrs.get("audience") != audience:
            continue
        tick = event.t_start // 60_000
        click.echo(f"[tick {tick:>4}] {event.attrs.get('audience')}: {event.attrs.get('message')}")
    sys.exit(0)


if __name__ == "__main__":
    main()
