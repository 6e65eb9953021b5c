"""Entities of the simulated ecosystem: clock, browsers, cookie jars, sites.

A :class:`World` owns every piece of mutable state for one simulation run.
All randomness flows from the single seeded generator it holds; nothing in
the package ever reads the wall clock.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from enum import Enum

from .cookies import EventName
from .errors import (
    DuplicateAccount,
    DuplicateBrowser,
    InvalidExpiry,
    UnknownAccount,
    UnknownBrowser,
    UnknownSite,
)

DAY_MS = 86_400_000
# "Three months" is fixed as exactly 90 days so the 90+(j-i) arithmetic
# stays exact at day granularity.
COOKIE_LIFETIME_MS = 90 * DAY_MS

# Where hop-0 reports go; excluded from third-party tallies.
TRACKER_DOMAIN = "tracker.example"


class ExpirationPolicy(Enum):
    EVERY_EVENT = "EveryEvent"
    NEVER = "Never"
    ONLY_FBCLID = "OnlyFbclid"
    ONLY_RELOAD = "OnlyReload"
    ROTATE_VALUE = "RotateValue"
    BLOCKED = "Blocked"


class ReportingClass(Enum):
    BOTH = "Both"
    FBP_ONLY_WITH_FBCLID = "FbpOnlyWithFbclid"
    FBP_ONLY = "FbpOnly"
    SILENT = "Silent"


class ConsentMode(Enum):
    ACCEPT_ALL = "AcceptAll"
    REJECT_ALL = "RejectAll"
    NO_ACTION = "NoAction"


@dataclass
class SimClock:
    now: int = 0  # ms since UNIX epoch

    def advance(self, delta_ms: int) -> None:
        if delta_ms < 0:
            raise ValueError("clock cannot move backwards")
        self.now += delta_ms


@dataclass
class CookieEntry:
    value: str
    created: int
    expires: int


class CookieJar:
    """Per-(browser, domain) cookie store with lazy expiry.

    An entry whose ``expires`` is at or before the clock is absent on read
    and evicted on the next write.
    """

    def __init__(self):
        self.entries: dict[str, CookieEntry] = {}

    def read(self, name: str, now: int) -> str | None:
        entry = self.entries.get(name)
        if entry is None or entry.expires <= now:
            return None
        return entry.value

    def read_entry(self, name: str, now: int) -> CookieEntry | None:
        entry = self.entries.get(name)
        if entry is None or entry.expires <= now:
            return None
        return entry

    def write(self, name: str, value: str, created: int, expires: int) -> None:
        if expires <= created:
            raise InvalidExpiry(f"expires {expires} <= created {created}")
        self._evict(created)
        self.entries[name] = CookieEntry(value=value, created=created, expires=expires)

    def touch(self, name: str, expires: int) -> None:
        """Update only the expiration of an existing entry."""
        self.entries[name].expires = expires

    def delete(self, name: str) -> None:
        self.entries.pop(name, None)

    def _evict(self, now: int) -> None:
        dead = [n for n, e in self.entries.items() if e.expires <= now]
        for n in dead:
            del self.entries[n]


@dataclass
class BrowserProfile:
    browser_id: str
    incognito: bool = False
    user_agent: str = "ua-default"
    jars: dict[str, CookieJar] = field(default_factory=dict)
    logged_in: str | None = None  # account id

    def jar(self, domain: str) -> CookieJar:
        if domain not in self.jars:
            self.jars[domain] = CookieJar()
        return self.jars[domain]

    def discard_jars(self) -> None:
        self.jars = {}


@dataclass
class SiteConfig:
    """Per-site behavior knobs; one instance per simulated website."""

    domain: str
    has_pixel: bool = True
    pixel_id: str = ""
    tracked_events: frozenset[EventName] = frozenset({EventName.PAGE_VIEW})
    expiration_policy: ExpirationPolicy = ExpirationPolicy.EVERY_EVENT
    reporting_class: ReportingClass = ReportingClass.BOTH
    strips_fbclid: bool = False
    shares_external_id: bool = False
    external_id_default_when_anonymous: bool = False
    consent_compliant: bool = False
    # Non-compliant sites whose consent banner still blocks the pixel until
    # the visitor interacts with it: dead under NoAction, alive otherwise.
    consent_requires_interaction: bool = False
    first_hop_third_parties: tuple[str, ...] = ()
    second_hop_forwarding: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.pixel_id:
            self.pixel_id = "px-" + self.domain
        if isinstance(self.tracked_events, (set, list)):
            self.tracked_events = frozenset(self.tracked_events)

    @property
    def registrable_suffix(self) -> str:
        return self.domain.rsplit(".", 1)[-1]


@dataclass
class Account:
    account_id: str
    created_at: int  # ms


class ExternalIdRegistry:
    """Site-assigned persistent visitor IDs.

    Values are stable within a scenario (keyed hash of seed, site, browser
    and a rotation epoch) unless a scenario explicitly rotates them.  Sites
    configured with a default anonymous ID hand the same value to every
    browser, incognito included.
    """

    ANONYMOUS = "anonymous-default"

    def __init__(self, seed: int):
        self._seed = seed
        self._epochs: dict[tuple[str, str], int] = {}

    def _value(self, site: str, subject: str) -> str:
        epoch = self._epochs.get((site, subject), 0)
        key = f"{self._seed}:{site}:{subject}:{epoch}".encode()
        return hashlib.sha256(key).hexdigest()

    def get(self, site_config: SiteConfig, browser_id: str) -> str:
        if site_config.external_id_default_when_anonymous:
            return self._value(site_config.domain, self.ANONYMOUS)
        return self._value(site_config.domain, browser_id)

    def rotate(self, site: str, browser_id: str) -> None:
        key = (site, browser_id)
        self._epochs[key] = self._epochs.get(key, 0) + 1


class World:
    """All mutable state of one simulation run."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = SimClock()
        self.browsers: dict[str, BrowserProfile] = {}
        self.sites: dict[str, SiteConfig] = {}
        self.accounts: dict[str, Account] = {}
        self.external_ids = ExternalIdRegistry(seed)
        self.consent_mode = ConsentMode.ACCEPT_ALL
        # Click-ID values injected by the scenario rather than issued by the
        # platform; kept for the ledger-completeness audit.
        self.injected_fbclids: set[str] = set()

    # -- entity management -------------------------------------------------

    def spawn_browser(
        self, browser_id: str, incognito: bool = False, user_agent: str = "ua-default"
    ) -> BrowserProfile:
        if browser_id in self.browsers:
            raise DuplicateBrowser(browser_id)
        browser = BrowserProfile(
            browser_id=browser_id, incognito=incognito, user_agent=user_agent
        )
        self.browsers[browser_id] = browser
        return browser

    def add_site(self, config: SiteConfig) -> SiteConfig:
        self.sites[config.domain] = config
        return config

    def create_account(self, account_id: str) -> Account:
        if account_id in self.accounts:
            raise DuplicateAccount(account_id)
        account = Account(account_id=account_id, created_at=self.clock.now)
        self.accounts[account_id] = account
        return account

    def browser(self, browser_id: str) -> BrowserProfile:
        try:
            return self.browsers[browser_id]
        except KeyError:
            raise UnknownBrowser(browser_id) from None

    def site(self, domain: str) -> SiteConfig:
        try:
            return self.sites[domain]
        except KeyError:
            raise UnknownSite(domain) from None

    def account(self, account_id: str) -> Account:
        try:
            return self.accounts[account_id]
        except KeyError:
            raise UnknownAccount(account_id) from None

    # -- jar access (convenience wrappers used by the pixel engine) --------

    def jar_read(self, browser_id: str, domain: str, name: str) -> str | None:
        return self.browser(browser_id).jar(domain).read(name, self.clock.now)

    def jar_write(
        self, browser_id: str, domain: str, name: str, value: str, created: int, expires: int
    ) -> None:
        self.browser(browser_id).jar(domain).write(name, value, created, expires)

    def end_step(self) -> None:
        """Incognito jars do not survive past the step that filled them."""
        for browser in self.browsers.values():
            if browser.incognito:
                browser.discard_jars()

    def next_random_number(self) -> int:
        # Ten decimal digits, matching the shape of observed cookie values.
        return self.rng.randrange(1, 10**10)

    # -- serialization -----------------------------------------------------

    def snapshot(self) -> dict:
        """Deterministic structured dump for golden-file comparisons."""
        return {
            "now": self.clock.now,
            "browsers": {
                bid: {
                    "incognito": b.incognito,
                    "user_agent": b.user_agent,
                    "logged_in": b.logged_in,
                    "jars": {
                        domain: {
                            name: {
                                "value": e.value,
                                "created": e.created,
                                "expires": e.expires,
                            }
                            for name, e in sorted(jar.entries.items())
                        }
                        for domain, jar in sorted(b.jars.items())
                    },
                }
                for bid, b in sorted(self.browsers.items())
            },
            "accounts": {
                aid: {"created_at": a.created_at}
                for aid, a in sorted(self.accounts.items())
            },
            "sites": sorted(self.sites),
        }
