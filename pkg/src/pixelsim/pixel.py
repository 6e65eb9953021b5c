"""Client-side pixel behavior: cookie creation, rolling expiration, reporting.

``on_page_event`` is the single entry point: given a page visit and the
event it fired, it mutates the browser's cookie jar according to the
site's configuration and returns the emission records (hop 0 to the
tracker, hops 1 and 2 to configured third parties).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .cookies import (
    EventName,
    EventReport,
    FbcCookie,
    Fbclid,
    FbpCookie,
    TrackedUrl,
    extract_fbclid,
    parse_fbp,
    serialize_fbc,
    serialize_fbp,
    subdomain_index,
)
from .world import (
    COOKIE_LIFETIME_MS,
    TRACKER_DOMAIN,
    ConsentMode,
    ExpirationPolicy,
    ReportingClass,
    SiteConfig,
    World,
)

FBP_NAME = "_fbp"
FBC_NAME = "_fbc"


class VisitKind(Enum):
    VISIT = "Visit"
    RELOAD = "Reload"
    VISIT_WITH_FBCLID = "VisitWithFbclid"


@dataclass(frozen=True)
class PageVisit:
    browser_id: str
    site: str
    url: TrackedUrl
    kind: VisitKind
    tick: int


@dataclass(frozen=True)
class EmissionRecord:
    report: EventReport
    hop: int  # 0 tracker, 1 first-hop third party, 2 second-hop


def classify_visit(browser_id: str, site: str, url: TrackedUrl, tick: int,
                   reload: bool = False) -> PageVisit:
    if extract_fbclid(url) is not None:
        kind = VisitKind.VISIT_WITH_FBCLID
    elif reload:
        kind = VisitKind.RELOAD
    else:
        kind = VisitKind.VISIT
    return PageVisit(browser_id=browser_id, site=site, url=url, kind=kind, tick=tick)


def _consent_blocks(world: World, site: SiteConfig) -> bool:
    mode = world.consent_mode
    if mode is ConsentMode.ACCEPT_ALL:
        return False
    if site.consent_compliant:
        # Compliant sites treat a missing choice the same as a rejection.
        return True
    if mode is ConsentMode.NO_ACTION and site.consent_requires_interaction:
        # The banner never got out of the way, so the pixel never loaded.
        return True
    return False


def external_id_for(world: World, site: SiteConfig, browser_id: str) -> str | None:
    if not site.shares_external_id:
        return None
    return world.external_ids.get(site, browser_id)


def apply_expiration_policy(world: World, site: SiteConfig, visit: PageVisit) -> None:
    """Renew (or rotate) the browser-ID cookie according to site policy."""
    jar = world.browser(visit.browser_id).jar(site.domain)
    entry = jar.read_entry(FBP_NAME, world.clock.now)
    if entry is None:
        return
    now = world.clock.now
    policy = site.expiration_policy
    if policy is ExpirationPolicy.NEVER:
        return
    if policy is ExpirationPolicy.ONLY_FBCLID and visit.kind is not VisitKind.VISIT_WITH_FBCLID:
        return
    if policy is ExpirationPolicy.ONLY_RELOAD and visit.kind is not VisitKind.RELOAD:
        return
    if policy is ExpirationPolicy.ROTATE_VALUE:
        cookie = FbpCookie(
            subdomain_index=parse_fbp(entry.value).subdomain_index,
            creation_time=now,
            random_number=world.next_random_number(),
        )
        jar.write(FBP_NAME, serialize_fbp(cookie), now, now + COOKIE_LIFETIME_MS)
        return
    jar.touch(FBP_NAME, now + COOKIE_LIFETIME_MS)


def on_page_event(world: World, visit: PageVisit, event: EventName) -> list[EmissionRecord]:
    site = world.site(visit.site)
    if not site.has_pixel or site.expiration_policy is ExpirationPolicy.BLOCKED:
        return []
    if _consent_blocks(world, site):
        return []

    now = world.clock.now
    browser = world.browser(visit.browser_id)
    jar = browser.jar(site.domain)
    idx = subdomain_index(site.domain, site.registrable_suffix)

    if jar.read(FBP_NAME, now) is None:
        cookie = FbpCookie(
            subdomain_index=idx, creation_time=now,
            random_number=world.next_random_number(),
        )
        jar.write(FBP_NAME, serialize_fbp(cookie), now, now + COOKIE_LIFETIME_MS)

    # A stripping site removes the parameter before the pixel ever sees it,
    # so no _fbc is written, nothing falls back to a bare parameter, and
    # third parties are not handed the ID either.
    fbclid = None if site.strips_fbclid else extract_fbclid(visit.url)
    if fbclid is not None:
        fbc = FbcCookie(subdomain_index=idx, creation_time=now, fbclid=fbclid)
        jar.write(FBC_NAME, serialize_fbc(fbc), now, now + COOKIE_LIFETIME_MS)

    apply_expiration_policy(world, site, visit)

    fbp_value = jar.read(FBP_NAME, now)
    fbc_value = jar.read(FBC_NAME, now)
    page_url = visit.url.serialize()
    emissions: list[EmissionRecord] = []

    if event in site.tracked_events and _reporting_permits(site, fbclid):
        include_fbc = site.reporting_class is not ReportingClass.FBP_ONLY
        # The bare click-ID fallback fires only when the _fbc write itself
        # was suppressed but the parameter was present in the URL.
        bare = fbclid if (include_fbc and fbc_value is None and fbclid is not None) else None
        report = EventReport(
            pixel_id=site.pixel_id,
            event=event,
            page_url=page_url,
            timestamp=now,
            destination=TRACKER_DOMAIN,
            fbp=fbp_value,
            fbc=fbc_value if include_fbc else None,
            fbclid_param=bare,
            external_id=external_id_for(world, site, visit.browser_id),
        )
        emissions.append(EmissionRecord(report=report, hop=0))

    for third_party in site.first_hop_third_parties:
        emissions.append(
            EmissionRecord(report=_forwarded(site, event, page_url, now, third_party,
                                             fbp_value, fbclid), hop=1)
        )
        for forwardee in site.second_hop_forwarding.get(third_party, ()):
            emissions.append(
                EmissionRecord(report=_forwarded(site, event, page_url, now, forwardee,
                                                 fbp_value, fbclid), hop=2)
            )
    return emissions


def _reporting_permits(site: SiteConfig, fbclid: Fbclid | None) -> bool:
    rc = site.reporting_class
    if rc is ReportingClass.SILENT:
        return False
    if rc is ReportingClass.FBP_ONLY_WITH_FBCLID:
        return fbclid is not None
    return True


def _forwarded(site: SiteConfig, event: EventName, page_url: str, now: int,
               destination: str, fbp_value: str | None, fbclid: Fbclid | None) -> EventReport:
    # Third-party wire format is unspecified upstream; the hop records reuse
    # the report shape with the destination overridden.
    return EventReport(
        pixel_id=site.pixel_id,
        event=event,
        page_url=page_url,
        timestamp=now,
        destination=destination,
        fbp=fbp_value,
        fbclid_param=fbclid,
    )
