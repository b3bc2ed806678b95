"""Small weighted-statistics helpers used throughout the package.

The weighted quantile convention is fixed here once: sorted point j sits at
plotting position (C_j - w_j) / (W - w_j) on [0, 1] (C = cumulative weight),
with linear interpolation in between. For unit weights this reduces to the
numpy default ("linear", Hyndman-Fan type 7), so Q(0) is the minimum and
Q(1) the maximum.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["weighted_quantile", "weighted_mean", "derive_seed"]


def weighted_quantile(values, weights, q) -> np.ndarray | float:
    """Weighted quantile(s) of `values` at probabilities `q` in [0, 1]."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.ndim != 1 or values.shape != weights.shape:
        raise ValueError("values and weights must be 1-d and aligned")
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("quantile probabilities must lie in [0, 1]")
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    if len(v) == 1:
        out = np.full(q.shape, v[0])
        return float(out) if out.ndim == 0 else out
    cum = np.cumsum(w)
    total = cum[-1]
    positions = (cum - w) / (total - w)
    out = np.interp(q, positions, v)
    return float(out) if out.ndim == 0 else out


def weighted_mean(values, weights) -> float:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(values * weights) / np.sum(weights))


def derive_seed(seed: int, *labels) -> int:
    """Deterministic child seed for a named sub-task of a seeded run."""
    digest = hashlib.sha256(repr((int(seed), *map(str, labels))).encode()).digest()
    return int.from_bytes(digest[:8], "little")
