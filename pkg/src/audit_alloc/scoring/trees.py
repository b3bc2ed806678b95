"""Weighted decision trees, random forests, and gradient boosting.

Trees use exact greedy splits over sorted feature values (no binning), with
weighted squared-error gain. Thresholds are stored as the largest value
routed left, so the learned partition is invariant to positive rescaling of
any feature. All randomness is driven by per-tree generators derived
deterministically from the model seed; fitting is serial.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import ConfigurationError
from .base import Scorer, TargetKind

__all__ = [
    "TreeEnsembleScorer",
    "fit_random_forest",
    "fit_gradient_boost",
    "boost_gradient",
]

_GAIN_EPS = 1e-12


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def finalize(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=np.float64)
        return self

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            interior = feat >= 0
            if not interior.any():
                return node
            go_left = np.zeros(len(X), dtype=bool)
            go_left[interior] = X[rows[interior], feat[interior]] <= self.threshold[node[interior]]
            node = np.where(interior, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Tree":
        tree = cls()
        tree.feature = d["feature"]
        tree.threshold = d["threshold"]
        tree.left = d["left"]
        tree.right = d["right"]
        tree.value = d["value"]
        return tree.finalize()


def _best_split(X, y, w, idx, feature_ids, min_leaf):
    """Best (feature, threshold, gain) over exact candidate splits at a node.

    Gain is the decrease in weighted SSE; candidates lie between distinct
    adjacent sorted values. Ties keep the earliest feature and position, so
    the search is deterministic for a fixed feature order.
    """
    wy = w[idx] * y[idx]
    wtot = float(w[idx].sum())
    ytot = float(wy.sum())
    base = ytot * ytot / wtot
    node_sse = float((wy * y[idx]).sum()) - base
    if node_sse <= _GAIN_EPS * (abs(base) + 1.0):
        return -1, 0.0, 0.0
    best_feature, best_threshold, best_gain = -1, 0.0, 0.0
    min_gain = _GAIN_EPS * (abs(base) + 1.0)
    n = len(idx)
    for j in feature_ids:
        xs = X[idx, j]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        cw = np.cumsum(w[idx][order])[:-1]
        cwy = np.cumsum(wy[order])[:-1]
        valid = xs_sorted[:-1] < xs_sorted[1:]
        if min_leaf > 1:
            pos = np.arange(1, n)
            valid &= (pos >= min_leaf) & (n - pos >= min_leaf)
        if not valid.any():
            continue
        right_w = wtot - cw
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = cwy**2 / cw + (ytot - cwy) ** 2 / right_w - base
        gains[~valid] = -np.inf
        i = int(np.argmax(gains))
        if gains[i] > max(best_gain, min_gain):
            best_feature, best_threshold, best_gain = int(j), float(xs_sorted[i]), float(gains[i])
    return best_feature, best_threshold, best_gain


def _build_tree(X, y, w, max_depth, min_leaf, max_features, rng) -> _Tree:
    d = X.shape[1]
    if max_features is None or max_features >= d:
        feature_pool = None
    else:
        feature_pool = int(max_features)
    tree = _Tree()
    root = tree._new_node()
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        wsum = w[idx].sum()
        tree.value[node] = float((w[idx] * y[idx]).sum() / wsum)
        if depth >= max_depth or len(idx) < 2 * min_leaf:
            continue
        if feature_pool is None:
            feature_ids = range(d)
        else:
            feature_ids = np.sort(rng.choice(d, size=feature_pool, replace=False))
        feat, thr, gain = _best_split(X, y, w, idx, feature_ids, min_leaf)
        if feat < 0 or gain <= 0.0:
            continue
        mask = X[idx, feat] <= thr
        left_idx, right_idx = idx[mask], idx[~mask]
        if len(left_idx) == 0 or len(right_idx) == 0:
            continue
        tree.feature[node] = feat
        tree.threshold[node] = thr
        left = tree._new_node()
        right = tree._new_node()
        tree.left[node], tree.right[node] = left, right
        stack.append((right, right_idx, depth + 1))
        stack.append((left, left_idx, depth + 1))
    return tree.finalize()


def _resolve_max_features(max_features, d: int) -> int | None:
    if max_features in (None, "all"):
        return None
    if max_features == "sqrt":
        return max(1, int(np.sqrt(d)))
    if max_features == "third":
        return max(1, d // 3)
    if isinstance(max_features, float) and 0 < max_features <= 1:
        return max(1, int(max_features * d))
    if isinstance(max_features, int) and max_features >= 1:
        return min(max_features, d)
    raise ConfigurationError(f"bad max_features: {max_features!r}")


class TreeEnsembleScorer(Scorer):
    """Forest or boosted ensemble; ``mode`` selects the aggregation rule.

    - "forest_vote": mean over trees of the leaf-majority vote (probability)
    - "forest_mean": mean of leaf values (regression)
    - "boost_logit": logistic link on base_value + lr * sum of leaf values
    - "boost_sum":   base_value + lr * sum of leaf values
    """

    def __init__(self, family, target_kind, feature_count, trees, mode,
                 base_value=0.0, learning_rate=1.0, training_loss=None):
        super().__init__(target_kind, feature_count)
        self.family = family
        self.trees = trees
        self.mode = mode
        self.base_value = float(base_value)
        self.learning_rate = float(learning_rate)
        self.training_loss = list(training_loss) if training_loss is not None else []

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        if self.mode == "forest_vote":
            votes = np.zeros(len(X))
            for tree in self.trees:
                votes += tree.predict(X) > 0.5
            return votes / len(self.trees)
        if self.mode == "forest_mean":
            acc = np.zeros(len(X))
            for tree in self.trees:
                acc += tree.predict(X)
            return acc / len(self.trees)
        acc = np.full(len(X), self.base_value)
        for tree in self.trees:
            acc += self.learning_rate * tree.predict(X)
        return acc

    def score_features(self, X: np.ndarray) -> np.ndarray:
        raw = self.raw_scores(X)
        return expit(raw) if self.mode == "boost_logit" else raw

    def _params_dict(self) -> dict:
        return {
            "mode": self.mode,
            "base_value": self.base_value,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
            "training_loss": list(self.training_loss),
        }

    @classmethod
    def _from_params(cls, family, target_kind, feature_count, params):
        return cls(
            family,
            target_kind,
            feature_count,
            [_Tree.from_dict(t) for t in params["trees"]],
            params["mode"],
            params["base_value"],
            params["learning_rate"],
            params.get("training_loss"),
        )


def fit_random_forest(X, y, w, target_kind: TargetKind, seed: int, n_estimators=100,
                      max_depth=12, min_samples_leaf=5, max_features="sqrt") -> TreeEnsembleScorer:
    """Bagged trees; bootstrap draws are weight-proportional, so sampling
    weights shape the resample rather than entering each tree's loss."""
    n, d = X.shape
    if target_kind.is_classification:
        mode = "forest_vote"
    else:
        mode = "forest_mean"
        if max_features == "sqrt":
            max_features = "third"
    mf = _resolve_max_features(max_features, d)
    p = np.asarray(w, dtype=float)
    p = p / p.sum()
    p = p / p.sum()  # renormalize so choice() sees an exact unit sum
    seeds = np.random.SeedSequence(seed).spawn(n_estimators)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        counts = np.bincount(rng.choice(n, size=n, replace=True, p=p), minlength=n)
        rows = np.flatnonzero(counts)
        trees.append(
            _build_tree(X[rows], y[rows], counts[rows].astype(float), max_depth, min_samples_leaf, mf, rng)
        )
    return TreeEnsembleScorer("random_forest", target_kind, d, trees, mode)


def boost_gradient(raw, y, classification: bool) -> np.ndarray:
    """Per-record gradient of the boosting loss wrt the raw ensemble score."""
    if classification:
        return expit(raw) - y
    return raw - y


def _boost_loss(raw, y, w, classification: bool) -> float:
    W = w.sum()
    if classification:
        return float(np.sum(w * (np.logaddexp(0.0, raw) - y * raw)) / W)
    return float(np.sum(w * (y - raw) ** 2) / W)


def fit_gradient_boost(X, y, w, target_kind: TargetKind, seed: int, n_estimators=100,
                       learning_rate=0.1, max_depth=3, min_samples_leaf=10,
                       bagging_fraction=1.0) -> TreeEnsembleScorer:
    """Gradient boosting: squared loss for regression, logistic loss for
    classification with Newton leaf values. Weighted training loss after each
    round is recorded on the returned scorer."""
    n, d = X.shape
    classification = target_kind.is_classification
    w = np.asarray(w, dtype=float)
    if classification:
        pbar = float(np.clip((w * y).sum() / w.sum(), 1e-12, 1 - 1e-12))
        base = float(np.log(pbar / (1.0 - pbar)))
        mode = "boost_logit"
    else:
        base = float((w * y).sum() / w.sum())
        mode = "boost_sum"
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    raw = np.full(n, base)
    trees: list[_Tree] = []
    losses = []
    for _ in range(n_estimators):
        if bagging_fraction < 1.0:
            rows = np.sort(rng.permutation(n)[: max(1, int(bagging_fraction * n))])
        else:
            rows = np.arange(n)
        residual = -boost_gradient(raw[rows], y[rows], classification)
        tree = _build_tree(X[rows], residual, w[rows], max_depth, min_samples_leaf, None, rng)
        if classification:
            # replace leaf means with one Newton step on the logistic loss
            leaves = tree.apply(X[rows])
            p = expit(raw[rows])
            num = np.bincount(leaves, weights=w[rows] * (y[rows] - p), minlength=len(tree.value))
            den = np.bincount(leaves, weights=w[rows] * p * (1.0 - p), minlength=len(tree.value))
            tree.value = np.where(den > 1e-12, num / np.maximum(den, 1e-12), 0.0)
        trees.append(tree)
        raw += learning_rate * tree.predict(X)
        losses.append(_boost_loss(raw, y, w, classification))
    return TreeEnsembleScorer(
        "gradient_boost", target_kind, d, trees, mode, base, learning_rate, losses
    )
