"""Deterministic simulator of a pixel-based web-tracking ecosystem."""

from .cookies import (
    EventName,
    EventReport,
    FbcCookie,
    Fbclid,
    FbpCookie,
    TrackedUrl,
    decode_report,
    encode_report,
    extract_fbclid,
    parse_fbc,
    parse_fbp,
    serialize_fbc,
    serialize_fbp,
    strip_tracking_params,
    subdomain_index,
)
from .pixel import EmissionRecord, PageVisit, VisitKind, on_page_event
from .reporting import (
    Distribution,
    ExpectedTable,
    MetricsReport,
    compare,
    tally_classes,
    third_party_distribution,
)
from .scenarios import RunResult, Scenario, Step, load_scenario, run
from .social import PlatformFeed, record_click
from .tracker import IdentityGraph
from .world import (
    ConsentMode,
    ExpirationPolicy,
    ReportingClass,
    SiteConfig,
    World,
)

__version__ = "0.1.0"
