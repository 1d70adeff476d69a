"""Core record types shared by every pipeline stage.

All types are immutable after construction and safe to share across
threads; the operations in this module are pure functions.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field

BSSID_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")

LABEL_POSITIVE = 1
LABEL_NEGATIVE = 0


class MalformedRecordError(ValueError):
    """A scan record that violates the schema, with line context when known."""

    def __init__(self, reason: str, line_no: int | None = None):
        self.reason = reason
        self.line_no = line_no
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"malformed record{where}: {reason}")


@dataclass(frozen=True, slots=True)
class ApObservation:
    """One access point seen in a scan: identifier, broadcast name, signal."""

    bssid: str  # lowercase colon-separated hex, e.g. "aa:bb:cc:00:11:22"
    ssid: str   # may be empty
    rssi: int   # dBm, <= 0


@dataclass(frozen=True, slots=True)
class WifiScanRecord:
    """A single device's WiFi scan: who scanned, when, and what was seen.

    After validation, ``aps`` holds at most one observation per bssid
    (the strongest RSSI wins on duplicates).
    """

    user: str
    ts: int  # Unix seconds
    aps: tuple[ApObservation, ...]

    def bssids(self) -> frozenset[str]:
        return frozenset(ap.bssid for ap in self.aps)


@dataclass(frozen=True, slots=True)
class BluetoothSighting:
    """One device seen in a Bluetooth scan.

    ``peer`` is set when the seen device belongs to a study participant;
    otherwise ``mac`` identifies an outside device. Never both.
    """

    user: str
    ts: int
    peer: str | None
    mac: str | None
    rssi: int


@dataclass(frozen=True, slots=True)
class CandidatePair:
    """Two co-temporal scans from distinct users, to be tested for proximity.

    ``user_a < user_b`` lexicographically so a dyad has one identity.
    ``ts`` is the lower of the two scan timestamps. ``bt_rssi`` is present
    on positives only: the strongest supporting Bluetooth sighting.
    """

    user_a: str
    user_b: str
    scan_a: WifiScanRecord
    scan_b: WifiScanRecord
    ts: int
    label: int  # LABEL_POSITIVE / LABEL_NEGATIVE
    bt_rssi: int | None = None

    def __post_init__(self):
        if self.user_a >= self.user_b:
            raise ValueError(f"pair not canonical: {self.user_a!r} !< {self.user_b!r}")
        if self.label == LABEL_NEGATIVE and self.bt_rssi is not None:
            raise ValueError("negative pair must not carry bt_rssi")


@dataclass(frozen=True, slots=True)
class OverlapView:
    """The intersection of two scans' AP lists, with both sides' RSSIs.

    ``common`` holds one ``(bssid, rssi_a, rssi_b)`` triple per shared
    bssid; ``only_a``/``only_b`` count the APs exclusive to each side.
    """

    common: tuple[tuple[str, int, int], ...]
    only_a: int
    only_b: int

    size: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "size", len(self.common))


def validate_record(user, ts, aps, line_no: int | None = None) -> WifiScanRecord:
    """Build a validated WifiScanRecord from raw parsed fields.

    Canonicalizes bssids to lowercase, collapses duplicate bssids keeping
    the strongest RSSI, and rejects records with a missing timestamp or
    out-of-schema fields.

    Raises:
        MalformedRecordError: with line context when the record is invalid.
    """
    if not isinstance(user, str) or not user:
        raise MalformedRecordError("missing or empty user", line_no)
    if ts is None or isinstance(ts, bool) or not isinstance(ts, int):
        raise MalformedRecordError("missing or non-integer ts", line_no)
    if ts < 0:
        raise MalformedRecordError(f"negative ts {ts}", line_no)

    best: dict[str, ApObservation] = {}
    for raw in aps:
        try:
            bssid, ssid, rssi = raw["bssid"], raw["ssid"], raw["rssi"]
        except (TypeError, KeyError) as exc:
            raise MalformedRecordError(f"ap entry missing field {exc}", line_no)
        if not isinstance(bssid, str):
            raise MalformedRecordError("bssid is not a string", line_no)
        bssid = sys.intern(bssid.lower())
        if not BSSID_RE.match(bssid):
            raise MalformedRecordError(f"bad bssid {bssid!r}", line_no)
        if not isinstance(ssid, str):
            raise MalformedRecordError("ssid is not a string", line_no)
        if isinstance(rssi, bool) or not isinstance(rssi, int):
            raise MalformedRecordError("rssi is not an integer", line_no)
        if rssi > 0:
            raise MalformedRecordError(f"positive rssi {rssi}", line_no)
        prev = best.get(bssid)
        if prev is None or rssi > prev.rssi:
            best[bssid] = ApObservation(bssid, sys.intern(ssid), rssi)

    return WifiScanRecord(user=sys.intern(user), ts=ts, aps=tuple(best.values()))


def intersect(scan_a: WifiScanRecord, scan_b: WifiScanRecord) -> OverlapView:
    """Intersect two scans' AP sets, pairing up RSSIs of shared bssids.

    Symmetric up to swapping the rssi columns and the only_a/only_b
    counts. Common routers are ordered by bssid so float reductions over
    the view are exactly symmetric. Empty scans yield an empty
    intersection.
    """
    rssi_b = {ap.bssid: ap.rssi for ap in scan_b.aps}
    common = tuple(sorted(
        (ap.bssid, ap.rssi, rssi_b[ap.bssid])
        for ap in scan_a.aps
        if ap.bssid in rssi_b
    ))
    n_common = len(common)
    return OverlapView(
        common=common,
        only_a=len(scan_a.aps) - n_common,
        only_b=len(scan_b.aps) - n_common,
    )
