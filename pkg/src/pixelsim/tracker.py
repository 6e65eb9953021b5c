"""Tracker backend: pseudonymous profiles and identity resolution.

Reports arriving at the tracker are folded into per-(site, browser-ID
cookie) profiles.  A report that carries a ledger-known click ID links its
profile to the issuing platform account, retroactively attributing the
profile's whole history.  External IDs merge profiles across cookie loss
on the same site.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cookies import EventReport, TrackedUrl, encode_report, parse_fbp
from .errors import UnknownAccount
from .social import PlatformFeed

ProfileKey = tuple[str, str]  # (site domain, serialized _fbp value)


@dataclass
class Activity:
    timestamp: int
    event: str
    page_url: str
    site: str

    def as_tuple(self) -> tuple:
        return (self.timestamp, self.site, self.event, self.page_url)


@dataclass
class PseudonymProfile:
    keys: set[ProfileKey] = field(default_factory=set)
    activity: list[Activity] = field(default_factory=list)
    linked_account: str | None = None
    external_ids: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class Anomaly:
    kind: str
    detail: str


@dataclass
class IngestOutcome:
    site: str
    profile_key: ProfileKey | None = None
    linked_account: str | None = None
    merged: bool = False
    duplicate: bool = False
    orphan: bool = False


class IdentityGraph:
    """Profiles, click-ledger joins, and external-ID bindings."""

    def __init__(self, click_ledger: PlatformFeed | None = None):
        self.click_ledger = click_ledger
        self._profiles: list[PseudonymProfile | None] = []
        self._key_to_pid: dict[ProfileKey, int] = {}
        self._external_index: dict[tuple[str, str], int] = {}
        self.known_accounts: set[str] = set()
        self.anomalies: list[Anomaly] = []
        self.orphans: list[EventReport] = []
        self._seen_reports: set[str] = set()

    # -- profile plumbing --------------------------------------------------

    def _new_profile(self, key: ProfileKey) -> int:
        pid = len(self._profiles)
        self._profiles.append(PseudonymProfile(keys={key}))
        self._key_to_pid[key] = pid
        return pid

    def _pid_for_key(self, key: ProfileKey) -> int:
        pid = self._key_to_pid.get(key)
        if pid is None:
            parse_fbp(key[1])  # every profile key must be a valid cookie
            pid = self._new_profile(key)
        return pid

    def profile(self, key: ProfileKey) -> PseudonymProfile | None:
        pid = self._key_to_pid.get(key)
        return self._profiles[pid] if pid is not None else None

    def profiles(self) -> list[PseudonymProfile]:
        return [p for p in self._profiles if p is not None]

    def _merge(self, keep: int, absorb: int) -> bool:
        """Fold profile ``absorb`` into ``keep``; refuse on conflicting links."""
        if keep == absorb:
            return False
        a, b = self._profiles[keep], self._profiles[absorb]
        if a.linked_account and b.linked_account and a.linked_account != b.linked_account:
            self.anomalies.append(
                Anomaly(
                    kind="conflicting-merge",
                    detail=f"{a.linked_account} vs {b.linked_account}",
                )
            )
            return False
        a.keys |= b.keys
        a.activity.extend(b.activity)
        a.activity.sort(key=Activity.as_tuple)
        a.external_ids |= b.external_ids
        if a.linked_account is None:
            a.linked_account = b.linked_account
        for key in b.keys:
            self._key_to_pid[key] = keep
        for ext_key, pid in list(self._external_index.items()):
            if pid == absorb:
                self._external_index[ext_key] = keep
        self._profiles[absorb] = None
        return True

    # -- ingestion ---------------------------------------------------------

    def ingest(self, report: EventReport) -> IngestOutcome:
        site = TrackedUrl.parse(report.page_url).origin
        outcome = IngestOutcome(site=site)

        wire = encode_report(report) if report.has_identifier() else None
        if wire is None:
            self.orphans.append(report)
            outcome.orphan = True
            return outcome
        if wire in self._seen_reports:
            outcome.duplicate = True
            return outcome
        self._seen_reports.add(wire)

        pid: int | None = None
        if report.fbp is not None:
            key = (site, report.fbp)
            pid = self._pid_for_key(key)
            self._profiles[pid].activity.append(
                Activity(
                    timestamp=report.timestamp,
                    event=report.event.value,
                    page_url=report.page_url,
                    site=site,
                )
            )
            self._profiles[pid].activity.sort(key=Activity.as_tuple)
            outcome.profile_key = key

        if report.external_id is not None:
            pid, merged = self._bind_external_id(site, report.external_id, pid)
            outcome.merged = merged

        fbclid_value = self._fbclid_of(report)
        if fbclid_value is not None and pid is not None:
            account = self._account_for_fbclid(fbclid_value, site)
            if account is not None:
                self._link(pid, account)

        if pid is not None:
            outcome.linked_account = self._profiles[pid].linked_account
            outcome.profile_key = min(self._profiles[pid].keys)
        return outcome

    @staticmethod
    def _fbclid_of(report: EventReport) -> str | None:
        if report.fbc is not None:
            # Fourth dotted segment, carried verbatim.
            return report.fbc.split(".", 3)[3]
        if report.fbclid_param is not None:
            return report.fbclid_param.value
        return None

    def _bind_external_id(self, site: str, external_id: str, pid: int | None) -> tuple[int | None, bool]:
        ext_key = (site, external_id)
        existing = self._external_index.get(ext_key)
        merged = False
        if pid is None:
            # No cookie in the report: the external ID alone identifies the
            # profile, if one is already bound on this site.
            pid = existing
            if pid is None:
                return None, False
        if existing is not None and existing != pid:
            if self._merge(existing, pid):
                pid = existing
                merged = True
        self._external_index[ext_key] = pid
        self._profiles[pid].external_ids.add(external_id)
        return pid, merged

    def _account_for_fbclid(self, fbclid_value: str, site: str) -> str | None:
        if self.click_ledger is None:
            return None
        entries = self.click_ledger.entries_for(fbclid_value)
        if not entries:
            return None
        # Prefer issuances whose link targeted this site; an ID reused
        # across targets falls back to the most recent issuance.
        matching = [e for e in entries if e.target_origin == site]
        candidates = matching or entries
        return candidates[-1].account_id

    def _link(self, pid: int, account: str) -> None:
        profile = self._profiles[pid]
        if profile.linked_account is None:
            profile.linked_account = account
        elif profile.linked_account != account:
            self.anomalies.append(
                Anomaly(
                    kind="conflicting-link",
                    detail=f"{profile.linked_account} vs {account}",
                )
            )

    # -- queries -----------------------------------------------------------

    def resolve(self) -> list[tuple[ProfileKey, str]]:
        """Every (profile key, account) pair currently linked."""
        pairs = []
        for key, pid in self._key_to_pid.items():
            account = self._profiles[pid].linked_account
            if account is not None:
                pairs.append((key, account))
        return sorted(pairs)

    def account_history(self, account_id: str) -> list[Activity]:
        if account_id not in self.known_accounts:
            raise UnknownAccount(account_id)
        merged: list[Activity] = []
        for profile in self.profiles():
            if profile.linked_account == account_id:
                merged.extend(profile.activity)
        merged.sort(key=Activity.as_tuple)
        return merged

    def dump(self) -> dict:
        """Deterministic structured export for reports and golden files."""
        return {
            "profiles": [
                {
                    "keys": sorted(f"{s}|{v}" for s, v in p.keys),
                    "linked_account": p.linked_account,
                    "external_ids": sorted(p.external_ids),
                    "activity": [a.as_tuple() for a in p.activity],
                }
                for p in sorted(
                    self.profiles(), key=lambda p: min(p.keys) if p.keys else ("", "")
                )
            ],
            "links": [[list(k), a] for k, a in self.resolve()],
            "anomalies": [[a.kind, a.detail] for a in self.anomalies],
            "orphans": len(self.orphans),
        }
