"""Binary decision trees grown from scratch, shared by both ensemble learners.

One grower serves two criteria: variance reduction on real-valued targets
(regression trees for boosting, with Newton leaf values when a hessian is
given) and Gini impurity on binary labels (classification trees for the
forest, with class-fraction leaves).

Determinism contract: splits are chosen by strictly-greater gain
comparisons scanning features in ascending index order, and within a
feature the smallest qualifying threshold wins, so rebuilding from the
same data, hyperparameters and rng state reproduces the tree exactly,
with or without a thread pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_LEAF = -1
_PURE_SSE = 1e-12
_MIN_HESSIAN = 1e-16


@dataclass(frozen=True, slots=True)
class Tree:
    """Flattened binary tree; index 0 is the root.

    feature[i] is -1 at leaves, where threshold is 0.0 and value holds the
    leaf output. gain[i] is the split's impurity decrease in summed-over-
    samples units (n_node * mean-impurity decrease), 0.0 at leaves.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf value reached by each row."""
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int32)
        if n == 0:
            return np.empty(0)
        while True:
            feat = self.feature[node]
            active = np.nonzero(feat != _LEAF)[0]
            if len(active) == 0:
                break
            cur = node[active]
            go_left = X[active, feat[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]

    def importance_sums(self, n_features: int) -> np.ndarray:
        """Per-feature sum of split gains, for impurity-based importance."""
        sums = np.zeros(n_features)
        internal = self.feature != _LEAF
        np.add.at(sums, self.feature[internal], self.gain[internal])
        return sums

    def as_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.array(d["feature"], dtype=np.int32),
            threshold=np.array(d["threshold"], dtype=float),
            left=np.array(d["left"], dtype=np.int32),
            right=np.array(d["right"], dtype=np.int32),
            value=np.array(d["value"], dtype=float),
            n_samples=np.array(d["n_samples"], dtype=np.int64),
            gain=np.array(d["gain"], dtype=float),
        )


def _scan_variance(vals: np.ndarray, t: np.ndarray, min_leaf: int):
    """Best variance-reduction cut of one feature's sorted values.

    Returns (gain, threshold, left_count) or None. Gain is the SSE
    decrease; thresholds are midpoints of consecutive distinct values and
    the smallest one wins ties.
    """
    n = len(vals)
    cum = np.cumsum(t)
    total = cum[-1]
    nl = np.arange(1, n, dtype=float)
    gl = cum[:-1]
    score = gl * gl / nl + (total - gl) ** 2 / (n - nl)
    mids = (vals[:-1] + vals[1:]) * 0.5
    valid = (mids > vals[:-1]) & (mids < vals[1:])
    if min_leaf > 1:
        k = np.arange(1, n)
        valid &= (k >= min_leaf) & (n - k >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    i = int(np.argmax(score))
    gain = float(score[i] - total * total / n)
    if gain <= 0.0:
        return None
    return gain, float(mids[i]), i + 1


def _scan_gini(vals: np.ndarray, t: np.ndarray, min_leaf: int):
    """Best Gini cut of one feature's sorted values; see _scan_variance."""
    n = len(vals)
    cum = np.cumsum(t)
    total = cum[-1]
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    pl = cum[:-1]
    pr = total - pl
    # weighted impurity sum: n_child * gini(child) = 2 p (n_child - p) / n_child
    cost = 2.0 * pl * (nl - pl) / nl + 2.0 * pr * (nr - pr) / nr
    mids = (vals[:-1] + vals[1:]) * 0.5
    valid = (mids > vals[:-1]) & (mids < vals[1:])
    if min_leaf > 1:
        k = np.arange(1, n)
        valid &= (k >= min_leaf) & (n - k >= min_leaf)
    if not valid.any():
        return None
    cost = np.where(valid, cost, np.inf)
    i = int(np.argmin(cost))
    gain = float(2.0 * total * (n - total) / n - cost[i])
    if gain <= 0.0:
        return None
    return gain, float(mids[i]), i + 1


_PARALLEL_SCAN_MIN_ROWS = 20000


def grow_tree(X: np.ndarray, y: np.ndarray, *, criterion: str,
              hess: np.ndarray | None = None,
              max_depth: int | None = None,
              min_samples_leaf: int = 1,
              min_samples_split: int = 2,
              max_features: int | None = None,
              rng: np.random.Generator | None = None,
              executor=None) -> Tree:
    """Grow one tree on the full row set of X.

    criterion "variance" fits real targets y; leaves output sum(y)/sum(hess)
    (a Newton step) when hess is given, else the mean. criterion "gini"
    expects y in {0,1} and leaves output the positive fraction.

    max_features, when set, samples that many candidate features per node
    from rng (consumed in depth-first pre-order, left subtree first).
    executor, when set, fans the per-feature split scans of large nodes
    out to threads; the merge is order-independent.
    """
    if criterion not in ("variance", "gini"):
        raise ValueError(f"unknown criterion {criterion!r}")
    if max_features is not None and rng is None:
        raise ValueError("max_features requires an rng")
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot grow a tree on zero rows")
    scan = _scan_variance if criterion == "variance" else _scan_gini

    # row indices sorted per feature once; partitions inherit the order
    orders = [np.argsort(X[:, j], kind="stable").astype(np.int32) for j in range(d)]
    mask = np.zeros(n, dtype=bool)

    feature_l: list[int] = []
    threshold_l: list[float] = []
    left_l: list[int] = []
    right_l: list[int] = []
    value_l: list[float] = []
    nsamp_l: list[int] = []
    gain_l: list[float] = []

    def leaf_value(rows: np.ndarray) -> float:
        if criterion == "gini":
            return float(y[rows].sum() / len(rows))
        num = float(y[rows].sum())
        if hess is None:
            return num / len(rows)
        return num / max(float(hess[rows].sum()), _MIN_HESSIAN)

    def new_node(parent: int, is_left: bool) -> int:
        node_id = len(feature_l)
        feature_l.append(_LEAF)
        threshold_l.append(0.0)
        left_l.append(_LEAF)
        right_l.append(_LEAF)
        value_l.append(0.0)
        nsamp_l.append(0)
        gain_l.append(0.0)
        if parent >= 0:
            (left_l if is_left else right_l)[parent] = node_id
        return node_id

    stack = [(-1, False, 0, orders)]
    while stack:
        parent, is_left, depth, idx = stack.pop()
        node = new_node(parent, is_left)
        rows = idx[0]
        n_node = len(rows)
        nsamp_l[node] = n_node

        splittable = n_node >= min_samples_split and n_node >= 2 * min_samples_leaf
        if max_depth is not None and depth >= max_depth:
            splittable = False
        if splittable:
            t_node = y[rows]
            s = float(t_node.sum())
            if criterion == "gini":
                splittable = 0.0 < s < n_node
            else:
                splittable = float(t_node @ t_node) - s * s / n_node > _PURE_SSE

        best = None  # (gain, feature, threshold, left_count)
        if splittable:
            if max_features is not None and max_features < d:
                feats = np.sort(rng.choice(d, size=max_features, replace=False))
            else:
                feats = range(d)
            if executor is not None and n_node >= _PARALLEL_SCAN_MIN_ROWS:
                futures = [(j, executor.submit(
                    scan, X[idx[j], j], y[idx[j]], min_samples_leaf)) for j in feats]
                results = [(j, f.result()) for j, f in futures]
            else:
                results = [(j, scan(X[idx[j], j], y[idx[j]], min_samples_leaf))
                           for j in feats]
            for j, res in results:
                if res is not None and (best is None or res[0] > best[0]):
                    best = (res[0], j, res[1], res[2])

        if best is None:
            value_l[node] = leaf_value(rows)
            continue

        gain, j_star, thr, left_count = best
        feature_l[node] = j_star
        threshold_l[node] = thr
        gain_l[node] = gain

        left_rows = idx[j_star][:left_count]
        mask[left_rows] = True
        left_idx = []
        right_idx = []
        for j in range(d):
            m = mask[idx[j]]
            left_idx.append(idx[j][m])
            right_idx.append(idx[j][~m])
        mask[left_rows] = False

        # push right first so the left subtree is built first
        stack.append((node, False, depth + 1, right_idx))
        stack.append((node, True, depth + 1, left_idx))

    return Tree(
        feature=np.array(feature_l, dtype=np.int32),
        threshold=np.array(threshold_l, dtype=float),
        left=np.array(left_l, dtype=np.int32),
        right=np.array(right_l, dtype=np.int32),
        value=np.array(value_l, dtype=float),
        n_samples=np.array(nsamp_l, dtype=np.int64),
        gain=np.array(gain_l, dtype=float),
    )
