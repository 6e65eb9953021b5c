"""The platform side: page loads, click-ID arrays, outbound-link decoration.

Every page load on the platform carries an array of 50 fresh 61-character
click IDs.  Outbound links get one of those IDs appended, chosen by the
link element's class name: same class, same ID within a load.  Every
issuance is written to an append-only ledger, which is the join key the
tracker later uses to de-anonymize visitors.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .cookies import (
    CLICK_ID_ALPHABET,
    CLICK_ID_LENGTH,
    Fbclid,
    TrackedUrl,
    extract_fbclid,
)
from .pixel import PageVisit, VisitKind
from .world import World

ARRAY_SIZE = 50


@dataclass
class PageLoad:
    load_id: str
    account_id: str
    tick: int
    click_ids: tuple[Fbclid, ...]  # exactly ARRAY_SIZE entries
    class_assignment: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ClickLedgerEntry:
    fbclid: Fbclid
    account_id: str
    element_class: str
    load_id: str
    issued_at: int
    target_origin: str  # origin the decorated link pointed at


def _derive_click_id(seed: int, account_id: str, counter: int, slot: int, nonce: int) -> Fbclid:
    key = f"{seed}:{account_id}:{counter}:{slot}:{nonce}".encode()
    digest = hashlib.sha512(key).digest()
    chars = "".join(CLICK_ID_ALPHABET[b & 63] for b in digest[:CLICK_ID_LENGTH])
    return Fbclid(chars)


class PlatformFeed:
    """Issues click IDs and keeps the account-to-ID ledger."""

    def __init__(self, seed: int):
        self._seed = seed
        self._load_counters: dict[str, int] = {}
        self._issued_values: set[str] = set()
        self.ledger: list[ClickLedgerEntry] = []
        self.current_loads: dict[str, PageLoad] = {}

    def refresh_click_ids(self, account_id: str, tick: int) -> PageLoad:
        counter = self._load_counters.get(account_id, 0)
        self._load_counters[account_id] = counter + 1
        ids = []
        for slot in range(ARRAY_SIZE):
            nonce = 0
            click_id = _derive_click_id(self._seed, account_id, counter, slot, nonce)
            # Cross-load freshness is enforced, not just assumed: regenerate
            # on the (practically impossible) digest collision.
            while click_id.value in self._issued_values:
                nonce += 1
                click_id = _derive_click_id(self._seed, account_id, counter, slot, nonce)
            self._issued_values.add(click_id.value)
            ids.append(click_id)
        load = PageLoad(
            load_id=f"{account_id}#{counter}",
            account_id=account_id,
            tick=tick,
            click_ids=tuple(ids),
        )
        self.current_loads[account_id] = load
        return load

    def decorate_outbound(
        self, load: PageLoad, target_url: TrackedUrl, element_class: str
    ) -> tuple[TrackedUrl, ClickLedgerEntry]:
        """Append the class-assigned click ID to an outbound link.

        Indices are allocated first-seen, round-robin; past 50 distinct
        classes they wrap, so a 51st class shares the first slot's ID.
        """
        if element_class not in load.class_assignment:
            load.class_assignment[element_class] = len(load.class_assignment) % ARRAY_SIZE
        click_id = load.click_ids[load.class_assignment[element_class]]
        decorated = target_url.with_param("fbclid", click_id.value)
        entry = ClickLedgerEntry(
            fbclid=click_id,
            account_id=load.account_id,
            element_class=element_class,
            load_id=load.load_id,
            issued_at=load.tick,
            target_origin=target_url.origin,
        )
        self.ledger.append(entry)
        return decorated, entry

    def entries_for(self, fbclid_value: str) -> list[ClickLedgerEntry]:
        return [e for e in self.ledger if e.fbclid.value == fbclid_value]


def record_click(world: World, browser_id: str, decorated_url: TrackedUrl) -> PageVisit:
    """Turn a click on a decorated link into the resulting page visit."""
    site = world.site(decorated_url.origin)  # raises UnknownSite
    world.browser(browser_id)
    # A stripped link (countermeasure) degrades to a plain visit.
    kind = (
        VisitKind.VISIT_WITH_FBCLID
        if extract_fbclid(decorated_url) is not None
        else VisitKind.VISIT
    )
    return PageVisit(
        browser_id=browser_id,
        site=site.domain,
        url=decorated_url,
        kind=kind,
        tick=world.clock.now,
    )
