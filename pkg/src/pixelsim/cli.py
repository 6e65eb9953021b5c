"""Command-line interface: run scenarios, replay experiments, parse codecs."""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import experiments
from .cookies import TrackedUrl, parse_fbc, parse_fbp, serialize_fbc
from .errors import SimulatorError
from .reporting import MetricsReport
from .scenarios import RunResult, load_scenario, run as run_scenario


@click.group()
def main():
    """Deterministic web-tracking-pixel ecosystem simulator."""


def _write_outputs(out: Path, report: MetricsReport, result: RunResult | None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    for name in report.distributions:
        (out / f"{name}.csv").write_text(report.distribution_csv(name), encoding="utf-8")
    if result is not None:
        world_dump = json.dumps(result.world.snapshot(), sort_keys=True, indent=2) + "\n"
        (out / "world.json").write_text(world_dump, encoding="utf-8")
        graph_dump = json.dumps(result.graph.dump(), sort_keys=True, indent=2) + "\n"
        (out / "graph.json").write_text(graph_dump, encoding="utf-8")
    click.echo(f"wrote {out}/report.json")


@main.command("run")
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", type=click.Path(), default="out", show_default=True)
def run_cmd(scenario_file, seed, out):
    """Execute a scenario JSON file."""
    scenario = load_scenario(scenario_file)
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    result = run_scenario(scenario)
    _write_outputs(Path(out), result.report, result)


def _parse_fractions(text: str | None) -> list[float] | None:
    if not text:
        return None
    return [float(x) for x in text.split(",")]


@main.command("experiment")
@click.argument(
    "name",
    type=click.Choice(
        ["profiling", "expiration", "external-id", "propagation", "consent", "four-day"]
    ),
)
@click.option("--sites", type=int, default=2308, show_default=True)
@click.option("--fractions", type=str, default=None, help="Comma-separated class fractions.")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--gap-days", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def experiment_cmd(name, sites, fractions, seed, gap_days, out):
    """Replay a built-in experiment and print its metrics report."""
    fracs = _parse_fractions(fractions)
    result = None
    if name == "profiling":
        report, result = experiments.experiment_profiling(
            sites, fracs or [0.923, 0.015, 0.039, 0.023], seed=seed
        )
    elif name == "expiration":
        report, result = experiments.experiment_expiration(
            sites,
            fracs or [1942 / 2308, 172 / 2308, 115 / 2308, 57 / 2308, 17 / 2308, 5 / 2308],
            gap_days=gap_days,
            seed=seed,
        )
    elif name == "external-id":
        f = fracs or [68 / 2308, 55 / 68, 4 / 68]
        report, result = experiments.experiment_external_id(
            sites, f[0], f[1], seed=seed, default_anonymous_fraction=f[2]
        )
    elif name == "propagation":
        report, _results = experiments.experiment_propagation(sites, seed=seed)
    elif name == "consent":
        f = fracs or [310 / 480, 4 / 310]
        report, _results = experiments.experiment_consent(
            sites, f[0], seed=seed, interaction_gated_fraction=f[1]
        )
    else:  # four-day
        result = experiments.run_four_day(seed)
        report = result.report
        report.counters["linked_pairs"] = len(result.graph.resolve())

    if out:
        _write_outputs(Path(out), report, result)
    else:
        click.echo(report.to_json(), nl=False)


@main.command("parse")
@click.argument("kind", type=click.Choice(["fbp", "fbc", "url"]))
@click.argument("value")
def parse_cmd(kind, value):
    """Parse a cookie or URL and print its structure as JSON."""
    try:
        if kind == "fbp":
            cookie = parse_fbp(value)
            data = dataclasses.asdict(cookie)
        elif kind == "fbc":
            cookie = parse_fbc(value)
            data = {
                "version": cookie.version,
                "subdomain_index": cookie.subdomain_index,
                "creation_time": cookie.creation_time,
                "fbclid": cookie.fbclid.value,
                "fbclid_canonical": cookie.fbclid.canonical,
                "serialized": serialize_fbc(cookie),
            }
        else:
            url = TrackedUrl.parse(value)
            data = {
                "origin": url.origin,
                "path": url.path,
                "query": [list(p) for p in url.query],
            }
    except SimulatorError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(data, indent=2, sort_keys=True))


@main.group("report")
def report_group():
    """Operations on emitted report files."""


@report_group.command("diff")
@click.argument("a", type=click.Path(exists=True))
@click.argument("b", type=click.Path(exists=True))
def report_diff(a, b):
    """Compare two report JSON files; exit non-zero when they differ."""
    left = json.loads(Path(a).read_text(encoding="utf-8"))
    right = json.loads(Path(b).read_text(encoding="utf-8"))
    differences = _diff(left, right)
    for path, lv, rv in differences:
        click.echo(f"{path}: {lv!r} != {rv!r}")
    if differences:
        sys.exit(1)
    click.echo("identical")


def _diff(left, right, path="$"):
    if isinstance(left, dict) and isinstance(right, dict):
        out = []
        for key in sorted(set(left) | set(right)):
            out.extend(
                _diff(left.get(key, "<missing>"), right.get(key, "<missing>"), f"{path}.{key}")
            )
        return out
    if isinstance(left, list) and isinstance(right, list):
        if len(left) != len(right):
            return [(path + ".length", len(left), len(right))]
        out = []
        for i, (lv, rv) in enumerate(zip(left, right)):
            out.extend(_diff(lv, rv, f"{path}[{i}]"))
        return out
    if left != right:
        return [(path, left, right)]
    return []


if __name__ == "__main__":
    main()
