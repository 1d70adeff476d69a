"""Candidate-pair construction from co-temporal WiFi scans.

The day is cut into one-hour windows. Within a window only
Bluetooth-active users are considered: people who both saw at least one
participant and were seen by at least one participant in that hour.
Positives are scan pairs backed by a Bluetooth sighting near the
interaction time; negatives must share at least one router, which keeps
the task close to the deployed setting instead of random dyads.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass

import numpy as np

from .records import LABEL_NEGATIVE, LABEL_POSITIVE, CandidatePair

WINDOW_S = 3600


@dataclass(frozen=True, slots=True)
class HourWindow:
    start_ts: int  # aligned to the hour
    active_users: frozenset[str]


def build_hour_windows(sightings) -> list[HourWindow]:
    """One window per hour containing at least one Bluetooth-active user.

    A user is active iff, within the hour, they appear as the scanner of
    a participant sighting and as a sighted peer. Sightings of
    non-participant devices (peer=None) do not count.
    """
    saw: dict[int, set[str]] = {}
    seen: dict[int, set[str]] = {}
    for s in sightings:
        if s.peer is None:
            continue
        hour = (s.ts // WINDOW_S) * WINDOW_S
        saw.setdefault(hour, set()).add(s.user)
        seen.setdefault(hour, set()).add(s.peer)
    windows = []
    for hour in sorted(saw.keys() & seen.keys()):
        active = saw[hour] & seen[hour]
        if active:
            windows.append(HourWindow(hour, frozenset(active)))
    return windows


def _index_sightings(sightings):
    """Pair -> time-sorted (ts, rssi) lists for participant sightings."""
    by_pair: dict[tuple[str, str], list[tuple[int, int]]] = {}
    for s in sightings:
        if s.peer is None or s.peer == s.user:
            continue
        key = (s.user, s.peer) if s.user < s.peer else (s.peer, s.user)
        insort(by_pair.setdefault(key, []), (s.ts, s.rssi))
    return by_pair


def generate_candidates(wifi, bt, delta_t: int = 300) -> list[CandidatePair]:
    """Build labeled candidate pairs from one window's scans and sightings.

    For each unordered user pair, every scan of the lexicographically
    smaller user pairs with its nearest-in-time scan of the other user,
    provided the gap is at most ``delta_t``; this keeps one five-minute
    meeting from spawning near-identical samples for every scan cross
    product. A candidate is positive when some sighting between the two
    users (either direction) lies within ``delta_t`` of the interaction
    timestamp min(ts_a, ts_b); ``bt_rssi`` records the strongest such
    sighting. Negatives are kept only when the scans share a router.
    """
    by_user: dict[str, list] = {}
    for rec in wifi:
        by_user.setdefault(rec.user, []).append(rec)

    users = sorted(by_user)
    scan_ts: dict[str, np.ndarray] = {}
    union_bssids: dict[str, frozenset] = {}
    for user in users:
        recs = by_user[user]
        recs.sort(key=lambda r: r.ts)
        scan_ts[user] = np.array([r.ts for r in recs], dtype=np.int64)
        union_bssids[user] = frozenset().union(*(r.bssids() for r in recs))

    bt_index = _index_sightings(bt)

    out = []
    for i, user_a in enumerate(users):
        recs_a = by_user[user_a]
        set_a = union_bssids[user_a]
        for user_b in users[i + 1:]:
            pair_bt = bt_index.get((user_a, user_b))
            # cheap reject: no sighting and no router either scan could share
            if pair_bt is None and set_a.isdisjoint(union_bssids[user_b]):
                continue
            recs_b = by_user[user_b]
            ts_b = scan_ts[user_b]
            pos = np.searchsorted(ts_b, scan_ts[user_a])
            for j, rec_a in enumerate(recs_a):
                rec_b = _nearest(recs_b, ts_b, pos[j], rec_a.ts)
                if rec_b is None or abs(rec_a.ts - rec_b.ts) > delta_t:
                    continue
                ts = min(rec_a.ts, rec_b.ts)
                bt_rssi = _strongest_sighting(pair_bt, ts, delta_t)
                if bt_rssi is None and rec_a.bssids().isdisjoint(rec_b.bssids()):
                    continue  # no overlap and no Bluetooth support
                label = LABEL_NEGATIVE if bt_rssi is None else LABEL_POSITIVE
                out.append(CandidatePair(
                    user_a=user_a, user_b=user_b,
                    scan_a=rec_a, scan_b=rec_b,
                    ts=ts, label=label, bt_rssi=bt_rssi,
                ))
    out.sort(key=lambda c: (c.ts, c.user_a, c.user_b, c.scan_a.ts, c.scan_b.ts))
    return out


def _nearest(recs_b, ts_b, pos, ts_a):
    """The scan of B closest in time to ts_a; earlier one wins exact ties."""
    if len(recs_b) == 0:
        return None
    lo = pos - 1
    if lo < 0:
        return recs_b[0]
    if pos >= len(recs_b):
        return recs_b[lo]
    if ts_a - ts_b[lo] <= ts_b[pos] - ts_a:
        return recs_b[lo]
    return recs_b[pos]


def _strongest_sighting(pair_bt, ts: int, delta_t: int):
    """Max RSSI over sightings with |ts_bt - ts| <= delta_t, else None."""
    if not pair_bt:
        return None
    best = None
    # pair_bt is sorted by ts; scan the [ts-delta_t, ts+delta_t] slice
    lo = _bisect_ts(pair_bt, ts - delta_t)
    for k in range(lo, len(pair_bt)):
        ts_bt, rssi = pair_bt[k]
        if ts_bt > ts + delta_t:
            break
        if best is None or rssi > best:
            best = rssi
    return best


def _bisect_ts(items, ts):
    lo, hi = 0, len(items)
    while lo < hi:
        mid = (lo + hi) // 2
        if items[mid][0] < ts:
            lo = mid + 1
        else:
            hi = mid
    return lo


def split_train_test(items, train_size: int, seed: int):
    """Uniform random train sample without replacement; the rest is test.

    Deterministic for a given seed; both splits keep the input order.
    """
    n = len(items)
    if train_size > n:
        raise ValueError(f"train_size {train_size} exceeds population {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train_idx = np.sort(perm[:train_size])
    test_idx = np.sort(perm[train_size:])
    return [items[i] for i in train_idx], [items[i] for i in test_idx]


def split_indices(n: int, train_size: int, seed: int):
    """Index form of split_train_test, for array-shaped data."""
    if train_size > n:
        raise ValueError(f"train_size {train_size} exceeds population {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return np.sort(perm[:train_size]), np.sort(perm[train_size:])
