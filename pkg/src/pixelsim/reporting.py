"""Aggregation of emission logs into metric reports.

Pure post-processing: class tallies from observed report contents,
per-site third-party counts with first-party-subdomain exclusion, CDFs,
and comparison of a report against a table of expected values.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .errors import MissingMetric
from .cookies import TrackedUrl
from .pixel import EmissionRecord
from .world import TRACKER_DOMAIN


@dataclass
class Distribution:
    """Sorted sample with a mean-of-middles median and an evaluable CDF."""

    samples: list[float]

    def __post_init__(self):
        self.samples = sorted(self.samples)

    @property
    def min(self) -> float:
        return self.samples[0]

    @property
    def max(self) -> float:
        return self.samples[-1]

    @property
    def median(self) -> float:
        n = len(self.samples)
        mid = n // 2
        if n % 2 == 1:
            return self.samples[mid]
        return (self.samples[mid - 1] + self.samples[mid]) / 2

    def cdf(self, x: float) -> float:
        count = sum(1 for s in self.samples if s <= x)
        return count / len(self.samples)

    def cdf_points(self) -> list[tuple[float, float]]:
        return [(x, self.cdf(x)) for x in sorted(set(self.samples))]


@dataclass
class ExpectedTable:
    """Named expected values with absolute tolerances."""

    entries: dict[str, tuple[float, float]]  # name -> (expected, tolerance)

    def __post_init__(self):
        for name, (_, tol) in self.entries.items():
            if tol < 0:
                raise ValueError(f"negative tolerance for {name!r}")


@dataclass
class MetricsReport:
    counters: dict[str, float] = field(default_factory=dict)
    classes: dict[str, int] = field(default_factory=dict)
    site_flags: dict[str, dict] = field(default_factory=dict)
    distributions: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    comparisons: list[tuple[str, bool, float]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "counters": dict(sorted(self.counters.items())),
            "classes": dict(sorted(self.classes.items())),
            "site_flags": {k: dict(sorted(v.items())) for k, v in sorted(self.site_flags.items())},
            "distributions": {
                name: [[x, c] for x, c in points]
                for name, points in sorted(self.distributions.items())
            },
            "comparisons": [[n, ok, d] for n, ok, d in self.comparisons],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    def distribution_csv(self, name: str) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["x", "cdf"])
        for x, c in self.distributions[name]:
            writer.writerow([x, c])
        return out.getvalue()


def _report_site(record: EmissionRecord) -> str:
    return TrackedUrl.parse(record.report.page_url).origin


def tally_classes(log: list[EmissionRecord], sites: list[str]) -> dict[str, int]:
    """Partition sites by the reporting behavior actually observed.

    Classification is by hop-0 report contents alone: a "plain" report
    carries no click-ID material, a "clicked" one carries the _fbc cookie
    or the bare parameter.
    """
    plain: set[str] = set()
    clicked: set[str] = set()
    for record in log:
        if record.hop != 0:
            continue
        site = _report_site(record)
        if record.report.fbc is not None or record.report.fbclid_param is not None:
            clicked.add(site)
        else:
            plain.add(site)
    tallies = {"Both": 0, "FbpOnlyWithFbclid": 0, "FbpOnly": 0, "Silent": 0}
    for site in sites:
        if site in clicked and site in plain:
            tallies["Both"] += 1
        elif site in clicked:
            tallies["FbpOnlyWithFbclid"] += 1
        elif site in plain:
            tallies["FbpOnly"] += 1
        else:
            tallies["Silent"] += 1
    return tallies


def _excluded(destination: str, site: str) -> bool:
    if destination == site or destination.endswith("." + site):
        return True  # first-party subdomain
    if destination == TRACKER_DOMAIN or destination.endswith("." + TRACKER_DOMAIN):
        return True  # tracker-owned
    return False


def destination_sets(
    log: list[EmissionRecord], sites: list[str]
) -> dict[str, tuple[set[str], set[str]]]:
    """Per site: (unique hop-1 destinations, unique hop-2 destinations)."""
    result = {site: (set(), set()) for site in sites}
    for record in log:
        if record.hop not in (1, 2):
            continue
        site = _report_site(record)
        if site not in result:
            continue
        destination = record.report.destination
        if _excluded(destination, site):
            continue
        result[site][record.hop - 1].add(destination)
    return result


def third_party_distribution(
    log: list[EmissionRecord], sites: list[str], scope: str = "unique_first_hop"
) -> Distribution:
    """Per-site third-party counts.

    ``unique_first_hop`` counts distinct hop-1 destinations.
    ``total_two_hop`` adds distinct hop-2 destinations on top, counting a
    domain again if it reappears in the second hop.
    """
    if scope not in ("unique_first_hop", "total_two_hop"):
        raise ValueError(f"unknown scope {scope!r}")
    sets = destination_sets(log, sites)
    samples = []
    for site in sites:
        first, second = sets[site]
        count = len(first)
        if scope == "total_two_hop":
            count += len(second)
        samples.append(count)
    return Distribution(samples)


def compare(report: MetricsReport, expected: ExpectedTable) -> list[tuple[str, bool, float]]:
    results = []
    for name, (value, tolerance) in expected.entries.items():
        if name in report.counters:
            observed = report.counters[name]
        elif name in report.classes:
            observed = report.classes[name]
        else:
            raise MissingMetric(name)
        delta = observed - value
        results.append((name, abs(delta) <= tolerance, delta))
    report.comparisons.extend(results)
    return results
