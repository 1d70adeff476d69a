"""The 16 pairwise features computed for every candidate pair.

Categories: AP presence (overlap, non_overlap, union, jaccard), RSSI
(spearman, pearson, manhattan, euclidean), presence+RSSI (top_ap,
top_ap_6db), timing (hour_of_week), popularity (min/max popularity,
adamic_adar), location (at_home, at_campus).

Correlations are undefined with fewer than three common routers or when
one side reads every signal at the same level, and are dropped when not
statistically significant; such values stay missing until mean
imputation, whose means come from training data only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import stdtr

from .ingest import month_key
from .records import CandidatePair, OverlapView, WifiScanRecord, intersect

FEATURE_NAMES = [
    "overlap",
    "non_overlap",
    "union",
    "jaccard",
    "spearman",
    "pearson",
    "manhattan",
    "euclidean",
    "top_ap",
    "top_ap_6db",
    "hour_of_week",
    "min_popularity",
    "max_popularity",
    "adamic_adar",
    "at_home",
    "at_campus",
]

CORRELATION_FEATURES = ("spearman", "pearson")

DEFAULT_ALPHA = 0.05
DEFAULT_POPULARITY_WINDOW_S = 300
DEFAULT_CAMPUS_SSID = "dtu"
DEFAULT_TOP_AP_TOLERANCE_DB = 6


class PopularityIndexError(ValueError):
    """A common router with popularity < 2: the index and the candidates
    were built from different data."""


@dataclass(frozen=True, slots=True)
class FeatureVector:
    overlap: int
    non_overlap: int
    union: int
    jaccard: float
    spearman: float | None
    pearson: float | None
    manhattan: float
    euclidean: float
    top_ap: int
    top_ap_6db: int
    hour_of_week: int
    min_popularity: int
    max_popularity: int
    adamic_adar: float
    at_home: int
    at_campus: int

    def to_array(self) -> np.ndarray:
        """Feature values in canonical order; missing correlations as NaN."""
        vals = [getattr(self, name) for name in FEATURE_NAMES]
        return np.array([np.nan if v is None else float(v) for v in vals])


# ---------------------------------------------------------------------------
# AP presence
# ---------------------------------------------------------------------------

def ap_presence(view: OverlapView) -> tuple[int, int, int, float]:
    """(overlap, non_overlap, union, jaccard); jaccard is 0 on empty union."""
    overlap = view.size
    union = overlap + view.only_a + view.only_b
    jaccard = overlap / union if union > 0 else 0.0
    return overlap, union - overlap, union, jaccard


# ---------------------------------------------------------------------------
# RSSI
# ---------------------------------------------------------------------------

def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson_coefficient(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return math.nan
    return float(min(1.0, max(-1.0, (da @ db) / denom)))


def _two_sided_p(r: float, n: int) -> float:
    # t approximation with n-2 degrees of freedom; |r|=1 degenerates to p=0
    df = n - 2
    if 1.0 - r * r <= 0.0:
        return 0.0
    t = abs(r) * math.sqrt(df / (1.0 - r * r))
    return 2.0 * float(stdtr(df, -t))


def rssi_correlations(view: OverlapView, alpha: float = DEFAULT_ALPHA):
    """Spearman and Pearson correlation of the shared routers' RSSIs.

    Either value is missing (None) when fewer than three routers overlap,
    when one side's readings have zero variance, or when the coefficient
    is not significant at ``alpha``.
    """
    n = view.size
    if n < 3:
        return None, None
    a = np.array([r_a for _, r_a, _ in view.common], dtype=float)
    b = np.array([r_b for _, _, r_b in view.common], dtype=float)
    if np.all(a == a[0]) or np.all(b == b[0]):
        return None, None
    pearson = _pearson_coefficient(a, b)
    spearman = _pearson_coefficient(_average_ranks(a), _average_ranks(b))

    def significant(r):
        if math.isnan(r) or _two_sided_p(r, n) >= alpha:
            return None
        return r

    return significant(spearman), significant(pearson)


def rssi_distances(view: OverlapView) -> tuple[float, float]:
    """Per-router l1 and l2 RSSI differences: sum|dA-dB|/N and sqrt(sum(dA-dB)^2)/N.

    Zero overlap yields (0, 0) by convention; only positives can reach
    that case and their correlations stay missing for imputation.
    """
    n = view.size
    if n == 0:
        return 0.0, 0.0
    diffs = np.array([r_a - r_b for _, r_a, r_b in view.common], dtype=float)
    manhattan = float(np.abs(diffs).sum()) / n
    euclidean = float(math.sqrt(float(diffs @ diffs))) / n
    return manhattan, euclidean


# ---------------------------------------------------------------------------
# AP presence + RSSI
# ---------------------------------------------------------------------------

def top_ap_features(scan_a: WifiScanRecord, scan_b: WifiScanRecord,
                    tolerance_db: int = DEFAULT_TOP_AP_TOLERANCE_DB) -> tuple[int, int]:
    """Whether the two scans agree on their strongest router.

    top_ap: some bssid attains the maximum RSSI in both scans (any
    maximizer counts under ties). top_ap_6db: some common bssid is within
    ``tolerance_db`` of the top router on both sides. Empty scans give 0.
    """
    if not scan_a.aps or not scan_b.aps:
        return 0, 0
    max_a = max(ap.rssi for ap in scan_a.aps)
    max_b = max(ap.rssi for ap in scan_b.aps)
    near_a = {ap.bssid for ap in scan_a.aps if ap.rssi >= max_a - tolerance_db}
    near_b = {ap.bssid for ap in scan_b.aps if ap.rssi >= max_b - tolerance_db}
    top_a = {ap.bssid for ap in scan_a.aps if ap.rssi == max_a}
    top_b = {ap.bssid for ap in scan_b.aps if ap.rssi == max_b}
    top_ap = 1 if top_a & top_b else 0
    top_ap_6db = 1 if near_a & near_b else 0
    return top_ap, top_ap_6db


# ---------------------------------------------------------------------------
# Popularity
# ---------------------------------------------------------------------------

class PopularityIndex:
    """How many distinct users scanned each router near a given moment.

    Built in one pass over the cleaned scan records and then read-only,
    so it can be shared across feature-extraction workers. Queries are
    cached: co-temporal candidates hit the same (bssid, ts) pairs often.
    """

    def __init__(self, records):
        per_bssid_ts: dict[str, list[int]] = {}
        per_bssid_user: dict[str, list[int]] = {}
        user_ids: dict[str, int] = {}
        for rec in records:
            uid = user_ids.setdefault(rec.user, len(user_ids))
            for ap in rec.aps:
                per_bssid_ts.setdefault(ap.bssid, []).append(rec.ts)
                per_bssid_user.setdefault(ap.bssid, []).append(uid)
        self._ts: dict[str, np.ndarray] = {}
        self._uid: dict[str, np.ndarray] = {}
        for bssid, ts_list in per_bssid_ts.items():
            ts_arr = np.array(ts_list, dtype=np.int64)
            uid_arr = np.array(per_bssid_user[bssid], dtype=np.int32)
            order = np.argsort(ts_arr, kind="stable")
            self._ts[bssid] = ts_arr[order]
            self._uid[bssid] = uid_arr[order]
        self._cache: dict[tuple[str, int, int], int] = {}

    def count_users(self, bssid: str, lo_ts: int, hi_ts: int) -> int:
        """Distinct users with an observation of bssid in [lo_ts, hi_ts]."""
        key = (bssid, lo_ts, hi_ts)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ts = self._ts.get(bssid)
        if ts is None:
            count = 0
        else:
            lo = int(np.searchsorted(ts, lo_ts, side="left"))
            hi = int(np.searchsorted(ts, hi_ts, side="right"))
            count = 0 if hi <= lo else len(np.unique(self._uid[bssid][lo:hi]))
        self._cache[key] = count
        return count


def popularity_features(view: OverlapView, ts: int, popularity: PopularityIndex,
                        window_s: int = DEFAULT_POPULARITY_WINDOW_S):
    """(min_popularity, max_popularity, adamic_adar) over the common routers.

    Popularity of a router is the number of distinct users who scanned it
    within ``window_s`` of the interaction timestamp. The Adamic-Adar
    score sums 1/ln(popularity): rarely-seen shared routers weigh more.
    Empty overlap gives (0, 0, 0).
    """
    if view.size == 0:
        return 0, 0, 0.0
    pops = []
    for bssid, _, _ in view.common:
        p = popularity.count_users(bssid, ts - window_s, ts + window_s)
        if p < 2:
            raise PopularityIndexError(
                f"router {bssid} has popularity {p} at ts={ts}; both pair members "
                "scanned it, so the index was built from different records"
            )
        pops.append(p)
    adamic_adar = float(sum(1.0 / math.log(p) for p in pops))
    return min(pops), max(pops), adamic_adar


# ---------------------------------------------------------------------------
# Timing and location
# ---------------------------------------------------------------------------

def hour_of_week(ts: int, tz_offset_s: int = 0) -> int:
    """Hours since local Monday 00:00, in 0..167."""
    hours = (ts + tz_offset_s) // 3600
    weekday = (hours // 24 + 3) % 7  # epoch day 0 was a Thursday
    return int(weekday * 24 + hours % 24)


def timing_location_features(pair: CandidatePair,
                             home_map: dict[tuple[str, str], str],
                             campus_ssid: str = DEFAULT_CAMPUS_SSID,
                             tz_offset_s: int = 0) -> tuple[int, int, int]:
    """(hour_of_week, at_home, at_campus) for a candidate pair.

    at_home: any router in the union is either user's home router for the
    meeting's calendar month. at_campus: any router in the union
    broadcasts the campus network name.
    """
    how = hour_of_week(pair.ts, tz_offset_s)
    month = month_key(pair.ts, tz_offset_s)
    homes = {home_map.get((pair.user_a, month)), home_map.get((pair.user_b, month))}
    homes.discard(None)
    union = pair.scan_a.bssids() | pair.scan_b.bssids()
    at_home = 1 if homes & union else 0
    at_campus = 0
    for ap in pair.scan_a.aps + pair.scan_b.aps:
        if ap.ssid == campus_ssid:
            at_campus = 1
            break
    return how, at_home, at_campus


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def extract_features(pair: CandidatePair, popularity: PopularityIndex,
                     home_map: dict[tuple[str, str], str],
                     campus_ssid: str = DEFAULT_CAMPUS_SSID,
                     tz_offset_s: int = 0,
                     alpha: float = DEFAULT_ALPHA,
                     popularity_window_s: int = DEFAULT_POPULARITY_WINDOW_S,
                     ) -> FeatureVector:
    """All 16 features of one candidate pair, correlations possibly missing."""
    view = intersect(pair.scan_a, pair.scan_b)
    overlap, non_overlap, union, jaccard = ap_presence(view)
    spearman, pearson = rssi_correlations(view, alpha)
    manhattan, euclidean = rssi_distances(view)
    top_ap, top_ap_6db = top_ap_features(pair.scan_a, pair.scan_b)
    min_pop, max_pop, adamic_adar = popularity_features(
        view, pair.ts, popularity, popularity_window_s)
    how, at_home, at_campus = timing_location_features(
        pair, home_map, campus_ssid, tz_offset_s)
    return FeatureVector(
        overlap=overlap, non_overlap=non_overlap, union=union, jaccard=jaccard,
        spearman=spearman, pearson=pearson,
        manhattan=manhattan, euclidean=euclidean,
        top_ap=top_ap, top_ap_6db=top_ap_6db,
        hour_of_week=how,
        min_popularity=min_pop, max_popularity=max_pop, adamic_adar=adamic_adar,
        at_home=at_home, at_campus=at_campus,
    )


def vectors_to_matrix(vectors) -> np.ndarray:
    """(n, 16) float matrix in canonical order; missing values as NaN."""
    return np.array([v.to_array() for v in vectors], dtype=float).reshape(
        len(vectors), len(FEATURE_NAMES))


# ---------------------------------------------------------------------------
# Imputation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ImputationState:
    """Training means used to fill missing correlation values.

    Fitted on training rows only and preserved, so test-time imputation
    never looks at test statistics.
    """

    spearman_mean: float
    pearson_mean: float
    n_missing_spearman: int
    n_missing_pearson: int

    def as_dict(self) -> dict:
        return {
            "spearman_mean": self.spearman_mean,
            "pearson_mean": self.pearson_mean,
            "n_missing_spearman": self.n_missing_spearman,
            "n_missing_pearson": self.n_missing_pearson,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImputationState":
        return cls(d["spearman_mean"], d["pearson_mean"],
                   d["n_missing_spearman"], d["n_missing_pearson"])


def fit_imputation(matrix: np.ndarray) -> ImputationState:
    """Means of the non-missing correlation columns of a training matrix."""
    state = {}
    for name in CORRELATION_FEATURES:
        col = matrix[:, FEATURE_NAMES.index(name)]
        valid = col[~np.isnan(col)]
        if len(valid) == 0:
            raise ValueError(f"cannot fit imputation: every {name} value is missing")
        state[name] = (float(valid.mean()), int(np.isnan(col).sum()))
    return ImputationState(
        spearman_mean=state["spearman"][0],
        pearson_mean=state["pearson"][0],
        n_missing_spearman=state["spearman"][1],
        n_missing_pearson=state["pearson"][1],
    )


def apply_imputation(matrix: np.ndarray, state: ImputationState) -> np.ndarray:
    """Copy of the matrix with missing correlations set to the stored means."""
    out = matrix.copy()
    means = {"spearman": state.spearman_mean, "pearson": state.pearson_mean}
    for name in CORRELATION_FEATURES:
        col = FEATURE_NAMES.index(name)
        mask = np.isnan(out[:, col])
        out[mask, col] = means[name]
    if np.isnan(out).any():
        raise ValueError("matrix has missing values outside the correlation columns")
    return out


def impute_vector(vector: FeatureVector, state: ImputationState) -> FeatureVector:
    """Single-vector form of apply_imputation."""
    return replace(
        vector,
        spearman=state.spearman_mean if vector.spearman is None else vector.spearman,
        pearson=state.pearson_mean if vector.pearson is None else vector.pearson,
    )
