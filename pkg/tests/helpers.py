"""Shared test utilities: random scenario generation and independent oracles.

The oracles here deliberately re-derive results from raw artifacts (the
emission log, the click ledger, the site configs) with plain dicts and
sets, sharing no code with the implementation paths they check.
"""

from __future__ import annotations

import random

from pixelsim.cookies import CLICK_ID_ALPHABET, TrackedUrl
from pixelsim.scenarios import RunResult, Scenario, Step
from pixelsim.world import (
    DAY_MS,
    TRACKER_DOMAIN,
    ExpirationPolicy,
    ReportingClass,
    SiteConfig,
)

ELEMENT_CLASSES = ["ad-card", "feed-link", "suggested", "banner"]


def random_scenario(seed: int) -> Scenario:
    """A small random scenario: <=5 browsers, <=8 sites, <=30 events."""
    rng = random.Random(seed)
    n_browsers = rng.randint(1, 5)
    n_sites = rng.randint(1, 8)
    browsers = [{"id": f"b{i}", "incognito": i == 4} for i in range(n_browsers)]
    sites = []
    for i in range(n_sites):
        domain = f"rand{i}.example"
        fanout = tuple(f"tp{j}.thirdparty{i}.example" for j in range(rng.randint(0, 3)))
        forwarding = {}
        for tp in fanout:
            if rng.random() < 0.5:
                forwarding[tp] = tuple(
                    f"fw{j}.{tp}" for j in range(rng.randint(1, 2))
                )
        sites.append(
            SiteConfig(
                domain=domain,
                has_pixel=rng.random() < 0.9,
                reporting_class=rng.choice(list(ReportingClass)),
                expiration_policy=rng.choice(list(ExpirationPolicy)),
                strips_fbclid=rng.random() < 0.2,
                shares_external_id=rng.random() < 0.4,
                external_id_default_when_anonymous=rng.random() < 0.2,
                first_hop_third_parties=fanout,
                second_hop_forwarding=forwarding,
            )
        )

    steps = []
    tick = 0
    accounts: list[str] = []
    bound_browsers: set[str] = set()
    loaded: list[str] = []
    n_events = rng.randint(1, 30)
    for _ in range(n_events):
        tick += rng.randint(1, DAY_MS)
        roll = rng.random()
        browser = f"b{rng.randrange(n_browsers)}"
        domain = f"rand{rng.randrange(n_sites)}.example"
        unbound = [f"b{i}" for i in range(n_browsers) if f"b{i}" not in bound_browsers]
        if roll < 0.45:
            steps.append(Step(tick, "Visit", {"browser": browser, "site": domain}))
        elif roll < 0.55 and len(accounts) < 3 and unbound:
            # One account per browser, so every account keeps a logged-in
            # browser for later platform clicks.
            browser = rng.choice(unbound)
            bound_browsers.add(browser)
            account = f"acct{len(accounts)}"
            accounts.append(account)
            steps.append(
                Step(tick, "CreateAccount", {"browser": browser, "account": account})
            )
        elif roll < 0.65 and accounts:
            account = rng.choice(accounts)
            loaded.append(account)
            steps.append(Step(tick, "PlatformLoad", {"account": account}))
        elif roll < 0.8 and loaded:
            steps.append(
                Step(
                    tick,
                    "PlatformClick",
                    {
                        "account": rng.choice(loaded),
                        "site": domain,
                        "element_class": rng.choice(ELEMENT_CLASSES),
                    },
                )
            )
        elif roll < 0.9:
            value = "".join(
                rng.choices(CLICK_ID_ALPHABET, k=rng.randint(5, 61))
            )
            steps.append(
                Step(
                    tick,
                    "InjectFbclid",
                    {"browser": browser, "site": domain, "value": value},
                )
            )
        else:
            steps.append(
                Step(
                    tick,
                    "DeleteCookie",
                    {"browser": browser, "site": domain, "name": "_fbp"},
                )
            )
    return Scenario(seed=seed, sites=sites, browsers=browsers, steps=steps)


def resolve_oracle(result: RunResult) -> list[tuple[tuple[str, str], str]]:
    """Brute-force join of the hop-0 log against the ledger, with the
    external-ID merge closure, replayed in log order."""
    ledger = result.feed.ledger
    profiles: list[dict | None] = []
    key_to_p: dict[tuple[str, str], int] = {}
    ext_to_p: dict[tuple[str, str], int] = {}

    def find(site, fbp):
        key = (site, fbp)
        if key not in key_to_p:
            profiles.append({"keys": {key}, "account": None})
            key_to_p[key] = len(profiles) - 1
        return key_to_p[key]

    def merge(keep, absorb):
        if keep == absorb:
            return keep
        a, b = profiles[keep], profiles[absorb]
        if a["account"] and b["account"] and a["account"] != b["account"]:
            return absorb  # conflicting links: merge refused
        a["keys"] |= b["keys"]
        a["account"] = a["account"] or b["account"]
        for k in b["keys"]:
            key_to_p[k] = keep
        for ek, p in list(ext_to_p.items()):
            if p == absorb:
                ext_to_p[ek] = keep
        profiles[absorb] = None
        return keep

    for record in result.log:
        if record.hop != 0:
            continue
        r = record.report
        site = TrackedUrl.parse(r.page_url).origin
        p = find(site, r.fbp) if r.fbp else None
        if r.external_id is not None:
            ek = (site, r.external_id)
            if p is None:
                p = ext_to_p.get(ek)
            elif ek in ext_to_p and ext_to_p[ek] != p:
                p = merge(ext_to_p[ek], p)
            if p is not None:
                ext_to_p[ek] = p
        fbclid = None
        if r.fbc is not None:
            fbclid = r.fbc.split(".", 3)[3]
        elif r.fbclid_param is not None:
            fbclid = r.fbclid_param.value
        if fbclid is not None and p is not None:
            # Only issuances that existed when the report arrived count;
            # step ticks are strictly increasing, so timestamps order them.
            entries = [
                e
                for e in ledger
                if e.fbclid.value == fbclid and e.issued_at <= r.timestamp
            ]
            matching = [e for e in entries if e.target_origin == site]
            chosen = (matching or entries)[-1] if entries else None
            if chosen is not None and profiles[p]["account"] is None:
                profiles[p]["account"] = chosen.account_id

    pairs = []
    for key, p in key_to_p.items():
        account = profiles[p]["account"]
        if account is not None:
            pairs.append((key, account))
    return sorted(pairs)


def distribution_oracle(result: RunResult, scope: str) -> list[int]:
    """Expected per-site third-party counts, from config plus the log.

    A site that never produced a forwarded emission contributes zero; one
    that did must have informed exactly its depth-2 expansion.
    """
    emitted: set[str] = set()
    for record in result.log:
        if record.hop in (1, 2):
            emitted.add(TrackedUrl.parse(record.report.page_url).origin)
    samples = []
    for site in result.scenario.sites:
        if site.domain not in emitted:
            samples.append(0)
            continue
        hop1, hop2 = bfs_destination_oracle(site)
        count = len(hop1)
        if scope == "total_two_hop":
            count += len(hop2)
        samples.append(count)
    return sorted(samples)


def bfs_destination_oracle(
    site: SiteConfig,
) -> tuple[set[str], set[str]]:
    """Depth-2 breadth-first expansion of a site's propagation graph,
    with first-party-subdomain and tracker exclusions applied."""

    def excluded(d):
        return (
            d == site.domain
            or d.endswith("." + site.domain)
            or d == TRACKER_DOMAIN
            or d.endswith("." + TRACKER_DOMAIN)
        )

    hop1 = {d for d in site.first_hop_third_parties if not excluded(d)}
    hop2 = set()
    for tp in site.first_hop_third_parties:
        for d in site.second_hop_forwarding.get(tp, ()):
            if not excluded(d):
                hop2.add(d)
    return hop1, hop2
