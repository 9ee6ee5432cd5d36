"""Command-line entry points: run, serve, query, verify."""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from .driver import Driver
from .gateway import PortInUse, parse_where, serve as serve_gateway
from .broker import Broker
from .model import encode_event
from .patterns import Pattern
from .runmetrics import metrics, read_runlog
from .scenario import SchemaError, SemanticError, load_scenario


@click.group()
def main():
    """Desk-scale event-cloud platform for emergency management."""


def _load(scenario: str, seed: int | None):
    try:
        return load_scenario(scenario, seed=seed)
    except FileNotFoundError as exc:
        raise click.ClickException(str(exc))
    except (SchemaError, SemanticError) as exc:
        raise click.ClickException(f"invalid scenario: {exc}")


def _speed_factor(speed: str) -> float | None:
    if speed == "max":
        return None
    try:
        factor = float(speed)
    except ValueError:
        raise click.ClickException(f'--speed must be "max" or a number, got {speed!r}')
    if factor <= 0:
        raise click.ClickException("--speed factor must be positive")
    return factor


@main.command()
@click.option("--scenario", default="nuclear", help="Scenario path or packaged name.")
@click.option("--decisions", type=click.Choice(["scripted", "interactive"]), default="scripted")
@click.option("--speed", default="max", help='"max" or a real-time factor (60 = one sim minute per wall second).')
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None, help="Write the run log (canonical lines).")
@click.option("--metrics", "metrics_path", type=click.Path(dir_okay=False), default=None, help="Write the metrics report (JSON).")
def run(scenario, decisions, speed, seed, log_path, metrics_path):
    """Execute a scenario and print the milestone table."""
    if decisions == "interactive":
        raise click.ClickException("interactive runs need the gateway: use `crisiscloud serve`")
    script = _load(scenario, seed)
    factor = _speed_factor(speed)
    sink = open(log_path, "w") if log_path else None
    try:
        runlog = Driver(script, decisions="scripted", speed=factor, log_sink=sink).run()
    finally:
        if sink:
            sink.close()
    report = metrics(runlog.events, script)
    click.echo(report.table())
    if metrics_path:
        Path(metrics_path).write_text(report.to_json() + "\n")
    if not report.all_ok():
        sys.exit(1)


@main.command()
@click.option("--scenario", default="nuclear")
@click.option("--decisions", type=click.Choice(["scripted", "interactive"]), default="interactive")
@click.option("--speed", default="max")
@click.option("--seed", type=int, default=None)
@click.option("--port", type=int, default=None, help="Defaults to $CRISISCLOUD_PORT or 8099.")
@click.option("--host", default="127.0.0.1")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None)
@click.option("--console", "console_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Mount a built web console at /console.")
def serve(scenario, decisions, speed, seed, port, host, log_path, console_dir):
    """Serve the gateway while the scenario runs (interactive by default)."""
    script = _load(scenario, seed)
    factor = _speed_factor(speed)
    port = port if port is not None else int(os.environ.get("CRISISCLOUD_PORT", "8099"))
    sink = open(log_path, "w") if log_path else None
    mode = "external" if decisions == "interactive" else "scripted"
    driver = Driver(script, decisions=mode, speed=factor, log_sink=sink)
    try:
        serve_gateway(driver, port=port, host=host, console_dir=console_dir)
    except PortInUse as exc:
        raise click.ClickException(str(exc))
    finally:
        if sink:
            sink.close()


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--from", "ts_from", type=int, default=0)
@click.option("--to", "ts_to", type=int, default=2**62)
@click.option("--etype", multiple=True)
@click.option("--where", multiple=True, help="attr:op:value (op in ==, !=, <, <=, >, >=); repeatable.")
def query(log_path, ts_from, ts_to, etype, where):
    """History query against a saved run log (replayed into a fresh store)."""
    with open(log_path) as fh:
        events = read_runlog(fh)
    store = Broker(n_shards=4)
    store.load(events)
    try:
        pattern = Pattern.of(
            etypes=list(etype) if etype else None,
            predicates=parse_where(list(where)),
        )
    except ValueError as exc:
        raise click.ClickException(f"bad --where clause: {exc}")
    for event in store.query_history(ts_from, ts_to, pattern):
        click.echo(encode_event(event))


@main.command()
@click.option("--scenario", default="nuclear")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, default=None)
def verify(scenario, log_path, seed):
    """Replay a run log against the scenario's milestone table."""
    script = _load(scenario, seed)
    with open(log_path) as fh:
        events = read_runlog(fh)
    report = metrics(events, script)
    click.echo(report.table())
    if not report.all_ok():
        click.echo("verification FAILED", err=True)
        sys.exit(1)
    click.echo("verification passed")


if __name__ == "__main__":
    main()
