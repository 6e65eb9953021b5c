"""Deterministic execution of scenario scripts.

A scenario is a seed, a set of site configs, a set of browsers, and a
tick-ordered list of steps.  Running it produces the final world state,
the emission log, the identity graph, and a metrics report.  Two runs
with the same scenario are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .cookies import EventName, TrackedUrl
from .errors import SimulatorError, ValidationError
from .pixel import EmissionRecord, classify_visit, on_page_event
from .reporting import MetricsReport
from .social import PlatformFeed, record_click
from .tracker import IdentityGraph
from .world import DAY_MS, ConsentMode, SiteConfig, World

ACTIONS = {
    "Visit",
    "Reload",
    "PlatformLoad",
    "PlatformClick",
    "CreateAccount",
    "Login",
    "DeleteCookie",
    "AdvanceDays",
    "InjectFbclid",
}


@dataclass(frozen=True)
class Step:
    tick: int
    action: str
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    seed: int
    sites: list[SiteConfig]
    browsers: list[dict]  # {"id": str, "incognito": bool, "user_agent": str}
    steps: list[Step]
    consent_mode: ConsentMode = ConsentMode.ACCEPT_ALL

    def validate(self) -> None:
        last_tick = None
        for i, step in enumerate(self.steps):
            if step.action not in ACTIONS:
                raise ValidationError(f"unknown action {step.action!r}", i)
            if last_tick is not None and step.tick <= last_tick:
                raise ValidationError("step ticks must be strictly increasing", i)
            last_tick = step.tick


@dataclass
class RunResult:
    scenario: Scenario
    world: World
    feed: PlatformFeed
    graph: IdentityGraph
    log: list[EmissionRecord]
    log_steps: list[int]  # step index per log entry
    report: MetricsReport

    def log_browsers(self) -> list[str]:
        """Browser responsible for each log entry (platform clicks included)."""
        browsers = []
        for index in self.log_steps:
            step = self.scenario.steps[index]
            browser = step.params.get("browser")
            if browser is None and "account" in step.params:
                browser = _browser_of(self.world, step.params["account"])
            browsers.append(browser or "")
        return browsers


def run(scenario: Scenario) -> RunResult:
    scenario.validate()
    world = World(seed=scenario.seed)
    world.consent_mode = scenario.consent_mode
    feed = PlatformFeed(seed=scenario.seed)
    graph = IdentityGraph(click_ledger=feed)
    for config in scenario.sites:
        world.add_site(config)
    for spec in scenario.browsers:
        world.spawn_browser(
            spec["id"],
            incognito=spec.get("incognito", False),
            user_agent=spec.get("user_agent", "ua-default"),
        )

    log: list[EmissionRecord] = []
    log_steps: list[int] = []

    for index, step in enumerate(scenario.steps):
        if step.tick < world.clock.now:
            raise ValidationError("tick precedes current time", index)
        world.clock.advance(step.tick - world.clock.now)
        try:
            emissions = _execute(world, feed, graph, step)
        except SimulatorError as exc:
            raise ValidationError(str(exc), index) from exc
        for record in emissions:
            log.append(record)
            log_steps.append(index)
            if record.hop == 0:
                graph.ingest(record.report)
        world.end_step()

    report = MetricsReport(
        counters={
            "emissions_total": len(log),
            "emissions_hop0": sum(1 for r in log if r.hop == 0),
            "emissions_hop1": sum(1 for r in log if r.hop == 1),
            "emissions_hop2": sum(1 for r in log if r.hop == 2),
            "profiles": len(graph.profiles()),
            "links": len(graph.resolve()),
            "anomalies": len(graph.anomalies),
            "orphans": len(graph.orphans),
        }
    )
    return RunResult(
        scenario=scenario,
        world=world,
        feed=feed,
        graph=graph,
        log=log,
        log_steps=log_steps,
        report=report,
    )


def _site_url(site: str, extras: list[tuple[str, str]] | None = None) -> TrackedUrl:
    return TrackedUrl(origin=site, path="/", query=tuple(extras or ()))


def _execute(
    world: World, feed: PlatformFeed, graph: IdentityGraph, step: Step
) -> list[EmissionRecord]:
    p = step.params
    action = step.action

    if action == "Visit":
        extras = [tuple(pair) for pair in p.get("url_extras", [])]
        visit = classify_visit(
            p["browser"], p["site"], _site_url(p["site"], extras), step.tick
        )
        return on_page_event(world, visit, EventName(p.get("event", "PageView")))

    if action == "Reload":
        visit = classify_visit(
            p["browser"], p["site"], _site_url(p["site"]), step.tick, reload=True
        )
        return on_page_event(world, visit, EventName(p.get("event", "PageView")))

    if action == "PlatformLoad":
        world.account(p["account"])
        feed.refresh_click_ids(p["account"], step.tick)
        return []

    if action == "PlatformClick":
        account = p["account"]
        world.account(account)
        load = feed.current_loads.get(account)
        if load is None:
            raise ValidationError(f"no platform page load for account {account!r}")
        browser_id = p.get("browser") or _browser_of(world, account)
        target = _site_url(p["site"])
        world.site(p["site"])
        decorated, _entry = feed.decorate_outbound(
            load, target, p.get("element_class", "feed-link")
        )
        visit = record_click(world, browser_id, decorated)
        return on_page_event(world, visit, EventName(p.get("event", "PageView")))

    if action == "CreateAccount":
        world.create_account(p["account"])
        graph.known_accounts.add(p["account"])
        world.browser(p["browser"]).logged_in = p["account"]
        return []

    if action == "Login":
        world.account(p["account"])
        world.browser(p["browser"]).logged_in = p["account"]
        return []

    if action == "DeleteCookie":
        world.browser(p["browser"]).jar(p["site"]).delete(p["name"])
        return []

    if action == "AdvanceDays":
        world.clock.advance(int(p["days"]) * DAY_MS)
        return []

    if action == "InjectFbclid":
        value = p["value"]
        world.injected_fbclids.add(value)
        url = _site_url(p["site"], [("fbclid", value)])
        visit = classify_visit(p["browser"], p["site"], url, step.tick)
        return on_page_event(world, visit, EventName(p.get("event", "PageView")))

    raise ValidationError(f"unknown action {action!r}")


def _browser_of(world: World, account: str) -> str:
    for browser_id, browser in world.browsers.items():
        if browser.logged_in == account:
            return browser_id
    raise ValidationError(f"no browser logged into account {account!r}")


# -- scenario file I/O -----------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "seed": scenario.seed,
        "consent_mode": scenario.consent_mode.value,
        "sites": [_site_to_dict(s) for s in scenario.sites],
        "browsers": scenario.browsers,
        "steps": [
            {"tick": s.tick, "action": s.action, **s.params} for s in scenario.steps
        ],
    }


def scenario_from_dict(data: dict) -> Scenario:
    steps = []
    for raw in data.get("steps", []):
        raw = dict(raw)
        tick = raw.pop("tick")
        action = raw.pop("action")
        steps.append(Step(tick=tick, action=action, params=raw))
    return Scenario(
        seed=data["seed"],
        consent_mode=ConsentMode(data.get("consent_mode", "AcceptAll")),
        sites=[_site_from_dict(s) for s in data.get("sites", [])],
        browsers=data.get("browsers", []),
        steps=steps,
    )


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _site_to_dict(site: SiteConfig) -> dict:
    return {
        "domain": site.domain,
        "has_pixel": site.has_pixel,
        "pixel_id": site.pixel_id,
        "tracked_events": sorted(e.value for e in site.tracked_events),
        "expiration_policy": site.expiration_policy.value,
        "reporting_class": site.reporting_class.value,
        "strips_fbclid": site.strips_fbclid,
        "shares_external_id": site.shares_external_id,
        "external_id_default_when_anonymous": site.external_id_default_when_anonymous,
        "consent_compliant": site.consent_compliant,
        "consent_requires_interaction": site.consent_requires_interaction,
        "first_hop_third_parties": list(site.first_hop_third_parties),
        "second_hop_forwarding": {
            k: list(v) for k, v in sorted(site.second_hop_forwarding.items())
        },
    }


def _site_from_dict(data: dict) -> SiteConfig:
    from .world import ExpirationPolicy, ReportingClass

    return SiteConfig(
        domain=data["domain"],
        has_pixel=data.get("has_pixel", True),
        pixel_id=data.get("pixel_id", ""),
        tracked_events=frozenset(
            EventName(e) for e in data.get("tracked_events", ["PageView"])
        ),
        expiration_policy=ExpirationPolicy(data.get("expiration_policy", "EveryEvent")),
        reporting_class=ReportingClass(data.get("reporting_class", "Both")),
        strips_fbclid=data.get("strips_fbclid", False),
        shares_external_id=data.get("shares_external_id", False),
        external_id_default_when_anonymous=data.get(
            "external_id_default_when_anonymous", False
        ),
        consent_compliant=data.get("consent_compliant", False),
        consent_requires_interaction=data.get("consent_requires_interaction", False),
        first_hop_third_parties=tuple(data.get("first_hop_third_parties", [])),
        second_hop_forwarding={
            k: tuple(v) for k, v in data.get("second_hop_forwarding", {}).items()
        },
    )
