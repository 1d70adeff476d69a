"""Independent brute-force reference implementations used by the tests.

Everything here is written directly from the feature definitions with
plain Python data structures and scipy.stats, deliberately sharing no
code with the package: set arithmetic over AP lists, nested-loop
popularity counting, and library correlation routines stand in for the
package's vectorized versions.
"""

from __future__ import annotations

import math
from datetime import datetime, timezone

from scipy import stats


def oracle_auc(scores, labels) -> float:
    """AUC by counting all positive-negative pairs, ties worth one half."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def oracle_best_f1(scores, labels) -> float:
    """Max F1 over every threshold/direction by exhaustive evaluation."""
    uniq = sorted(set(scores))
    cuts = [-math.inf, math.inf]
    cuts += [(a + b) / 2 for a, b in zip(uniq, uniq[1:])]
    n_pos = sum(labels)
    best = 0.0
    for cut in cuts:
        for positive_when in ("greater", "less"):
            if positive_when == "greater":
                pred = [1 if s > cut else 0 for s in scores]
            else:
                pred = [1 if s < cut else 0 for s in scores]
            tp = sum(1 for p, l in zip(pred, labels) if p == 1 and l == 1)
            fp = sum(1 for p, l in zip(pred, labels) if p == 1 and l == 0)
            if tp == 0:
                continue
            precision = tp / (tp + fp)
            recall = tp / n_pos
            best = max(best, 2 * precision * recall / (precision + recall))
    return best


def oracle_hour_of_week(ts: int, tz_offset_s: int = 0) -> int:
    dt = datetime.fromtimestamp(ts + tz_offset_s, tz=timezone.utc)
    return dt.weekday() * 24 + dt.hour


def oracle_month(ts: int, tz_offset_s: int = 0) -> str:
    dt = datetime.fromtimestamp(ts + tz_offset_s, tz=timezone.utc)
    return f"{dt.year:04d}-{dt.month:02d}"


def oracle_popularity(records, bssid: str, lo: int, hi: int) -> int:
    """Distinct users with an observation of bssid at ts in [lo, hi]."""
    users = set()
    for rec in records:
        if lo <= rec.ts <= hi:
            for a in rec.aps:
                if a.bssid == bssid:
                    users.add(rec.user)
    return len(users)


def oracle_features(pair, records, home_map, campus_ssid="dtu",
                    tz_offset_s=0, alpha=0.05, window_s=300) -> dict:
    """All 16 features of a candidate pair, by direct evaluation."""
    rssi_a = {a.bssid: a.rssi for a in pair.scan_a.aps}
    rssi_b = {a.bssid: a.rssi for a in pair.scan_b.aps}
    set_a, set_b = set(rssi_a), set(rssi_b)
    common = sorted(set_a & set_b)
    union = set_a | set_b

    out = {}
    out["overlap"] = len(common)
    out["union"] = len(union)
    out["non_overlap"] = len(union) - len(common)
    out["jaccard"] = len(common) / len(union) if union else 0.0

    xs = [rssi_a[m] for m in common]
    ys = [rssi_b[m] for m in common]
    out["spearman"] = None
    out["pearson"] = None
    if len(common) >= 3 and len(set(xs)) > 1 and len(set(ys)) > 1:
        r, p = stats.pearsonr(xs, ys)
        out["pearson"] = float(r) if p < alpha else None
        r, p = stats.spearmanr(xs, ys)
        out["spearman"] = float(r) if p < alpha else None

    if common:
        diffs = [rssi_a[m] - rssi_b[m] for m in common]
        out["manhattan"] = sum(abs(d) for d in diffs) / len(common)
        out["euclidean"] = math.sqrt(sum(d * d for d in diffs)) / len(common)
    else:
        out["manhattan"] = 0.0
        out["euclidean"] = 0.0

    if rssi_a and rssi_b:
        top_a = max(rssi_a.values())
        top_b = max(rssi_b.values())
        best_a = {m for m, r in rssi_a.items() if r == top_a}
        best_b = {m for m, r in rssi_b.items() if r == top_b}
        near_a = {m for m, r in rssi_a.items() if r >= top_a - 6}
        near_b = {m for m, r in rssi_b.items() if r >= top_b - 6}
        out["top_ap"] = 1 if best_a & best_b else 0
        out["top_ap_6db"] = 1 if near_a & near_b else 0
    else:
        out["top_ap"] = 0
        out["top_ap_6db"] = 0

    out["hour_of_week"] = oracle_hour_of_week(pair.ts, tz_offset_s)

    if common:
        pops = [oracle_popularity(records, m, pair.ts - window_s, pair.ts + window_s)
                for m in common]
        out["min_popularity"] = min(pops)
        out["max_popularity"] = max(pops)
        out["adamic_adar"] = sum(1.0 / math.log(p) for p in pops)
    else:
        out["min_popularity"] = 0
        out["max_popularity"] = 0
        out["adamic_adar"] = 0.0

    month = oracle_month(pair.ts, tz_offset_s)
    homes = {home_map.get((pair.user_a, month)), home_map.get((pair.user_b, month))}
    homes.discard(None)
    out["at_home"] = 1 if homes & union else 0
    out["at_campus"] = 0
    for a in list(pair.scan_a.aps) + list(pair.scan_b.aps):
        if a.ssid == campus_ssid:
            out["at_campus"] = 1
            break
    return out
