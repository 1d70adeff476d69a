"""Shared builders for scan fixtures and random-candidate generators."""

from __future__ import annotations

import numpy as np
import pytest

from wifi_proximity.records import ApObservation, CandidatePair, WifiScanRecord
from wifi_proximity.synthgen import WorldConfig


def mac(i: int) -> str:
    """Deterministic distinct bssid for index i."""
    return f"aa:bb:cc:{(i >> 16) & 0xFF:02x}:{(i >> 8) & 0xFF:02x}:{i & 0xFF:02x}"


def ap(i: int, rssi: int, ssid: str = "") -> ApObservation:
    return ApObservation(bssid=mac(i), ssid=ssid, rssi=rssi)


def scan(user: str, ts: int, aps) -> WifiScanRecord:
    return WifiScanRecord(user=user, ts=ts, aps=tuple(aps))


def random_scan(rng: np.random.Generator, user: str, ts: int,
                pool_size: int = 40, max_aps: int = 15,
                campus_ssid: str | None = None) -> WifiScanRecord:
    """Scan over a shared router pool so pairs overlap often."""
    n = int(rng.integers(0, max_aps + 1))
    idx = rng.choice(pool_size, size=n, replace=False)
    aps = []
    for i in idx:
        ssid = ""
        if campus_ssid is not None and i % 7 == 0:
            ssid = campus_ssid
        aps.append(ap(int(i), int(rng.integers(-95, 0)), ssid))
    return scan(user, ts, aps)


def random_pair(rng: np.random.Generator, label: int = 0,
                campus_ssid: str | None = None) -> CandidatePair:
    ts_a = int(rng.integers(0, 10 ** 9))
    ts_b = ts_a + int(rng.integers(-300, 301))
    sa = random_scan(rng, "ua", ts_a, campus_ssid=campus_ssid)
    sb = random_scan(rng, "ub", max(ts_b, 0), campus_ssid=campus_ssid)
    bt = int(rng.integers(-90, -20)) if label == 1 else None
    return CandidatePair(user_a="ua", user_b="ub", scan_a=sa, scan_b=sb,
                         ts=min(sa.ts, sb.ts), label=label, bt_rssi=bt)


@pytest.fixture(scope="session")
def tiny_world() -> WorldConfig:
    """Small world for unit tests: quick to generate, still has meetings."""
    return WorldConfig(seed=7, n_users=24, n_routers=80, days=2,
                       n_buildings=2, n_venues=2, area_m=1200.0)
