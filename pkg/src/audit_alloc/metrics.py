"""Evaluate allocations: dollars recovered, no-change share, cost, overlap,
per-bucket audit rates, monotonicity, and the two-group audit identities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocation import Allocation, RateBudget
from .errors import BudgetError
from .population import DE_MINIMIS, Population, misreport_flags

__all__ = [
    "MetricsReport",
    "GroupStats",
    "LemmaReport",
    "revenue",
    "no_change_rate",
    "total_cost",
    "net_revenue",
    "oracle_overlap",
    "audit_rate_by_bucket",
    "audit_mass_by_bucket",
    "check_monotone",
    "lemma1_check",
    "lemma2_check",
    "compute_metrics",
]

_IDENTITY_TOL = 1e-12


@dataclass(frozen=True)
class MetricsReport:
    """One allocation's evaluation row. ``no_change_rate`` and
    ``oracle_overlap`` are None when undefined (never silently zero).
    Reports carry the misreport threshold they were computed under."""

    label: str
    revenue: float
    no_change_rate: float | None
    cost: float
    net_revenue: float
    oracle_overlap: float | None
    audit_rate_by_bucket: tuple
    tau: float = DE_MINIMIS


def revenue(alloc: Allocation, pop: Population) -> float:
    """Weighted sum of misreport amounts over audited mass."""
    a = alloc.aligned_to(pop)
    return float(np.sum(a * pop.weight * pop.misreport))


def no_change_rate(alloc: Allocation, pop: Population, tau: float = DE_MINIMIS) -> float | None:
    """Share of audited mass with no significant adjustment; None if nothing audited."""
    a = alloc.aligned_to(pop)
    audited = float(np.sum(a * pop.weight))
    if audited <= 0.0:
        return None
    m = misreport_flags(pop.misreport, tau)
    return float(np.sum(a * pop.weight * (1.0 - m)) / audited)


def total_cost(alloc: Allocation, pop: Population) -> float:
    a = alloc.aligned_to(pop)
    return float(np.sum(a * pop.weight * pop.cost))


def net_revenue(alloc: Allocation, pop: Population) -> float:
    return revenue(alloc, pop) - total_cost(alloc, pop)


def oracle_overlap(alloc: Allocation, oracle: Allocation, pop: Population, k: float) -> float:
    """Weighted share of the audit budget both allocations spend on the same
    records: sum of min(intensities) * weight over k * total weight."""
    for a in (alloc, oracle):
        if not isinstance(a.budget, RateBudget) or abs(a.budget.k - k) > 1e-15:
            raise BudgetError(f"overlap requires both allocations under RateBudget({k})")
    a = alloc.aligned_to(pop)
    o = oracle.aligned_to(pop)
    shared = float(np.sum(np.minimum(a, o) * pop.weight))
    return float(np.clip(shared / (k * pop.total_weight), 0.0, 1.0))


def audit_rate_by_bucket(alloc: Allocation, pop: Population) -> list:
    """Per bucket: audited weight over bucket weight; None for empty buckets."""
    if not pop.bucketed:
        raise ValueError("population must be bucketed first (assign_buckets)")
    a = alloc.aligned_to(pop)
    rates = []
    for b in range(1, pop.n_buckets + 1):
        mask = pop.bucket == b
        bucket_w = float(pop.weight[mask].sum())
        if bucket_w == 0.0:
            rates.append(None)
        else:
            rates.append(float(np.sum(a[mask] * pop.weight[mask]) / bucket_w))
    return rates


def audit_mass_by_bucket(alloc: Allocation, pop: Population) -> np.ndarray:
    """Per bucket: audited weight (the quantity the monotone LP constrains)."""
    if not pop.bucketed:
        raise ValueError("population must be bucketed first (assign_buckets)")
    a = alloc.aligned_to(pop)
    return np.array([
        float(np.sum(a[pop.bucket == b] * pop.weight[pop.bucket == b]))
        for b in range(1, pop.n_buckets + 1)
    ])


def check_monotone(rates, tol: float) -> bool:
    """True iff each defined adjacent pair satisfies rates[b+1] >= rates[b] - tol."""
    defined = [r for r in rates if r is not None]
    return all(b >= a - tol for a, b in zip(defined, defined[1:]))


@dataclass(frozen=True)
class GroupStats:
    """Audit outcome counts for one group (weighted counts may be reals)."""

    n: float
    m: float
    audits: float
    true_positives: float
    false_positives: float

    def __post_init__(self):
        if min(self.n, self.m, self.audits, self.true_positives, self.false_positives) < 0:
            raise ValueError("counts must be nonnegative")
        if self.m > self.n:
            raise ValueError("positives cannot exceed group size")
        if abs((self.true_positives + self.false_positives) - self.audits) > _IDENTITY_TOL * max(1.0, self.audits):
            raise ValueError("audits must equal true + false positives")

    @property
    def r(self) -> float:
        return self.n - self.m

    @property
    def alpha(self) -> float:
        """Audit false positive rate FP / r."""
        return self.false_positives / self.r

    @property
    def beta(self) -> float:
        """Audit true positive rate TP / m."""
        return self.true_positives / self.m

    @property
    def precision(self) -> float:
        return self.true_positives / self.audits


@dataclass(frozen=True)
class LemmaReport:
    applicable: bool
    passed: bool | None
    left_side: bool | None = None
    right_side: bool | None = None
    detail: str = ""


def lemma1_check(g1: GroupStats, g2: GroupStats) -> LemmaReport:
    """Equal-TPR identity: with beta_1 = beta_2, audits satisfy
    A2 >= A1 exactly when m1/m2 <= p1/p2 (p = audit precision)."""
    scale = max(1.0, g1.n, g2.n)
    if abs(g1.n - g2.n) > _IDENTITY_TOL * scale:
        return LemmaReport(False, None, detail="groups must have equal size")
    if min(g1.m, g2.m, g1.true_positives, g2.true_positives, g1.audits, g2.audits) <= 0:
        return LemmaReport(False, None, detail="m and precision must be positive in both groups")
    if abs(g1.beta - g2.beta) > _IDENTITY_TOL:
        return LemmaReport(False, None, detail="true positive rates differ")
    d_audits = g2.audits - g1.audits
    d_ratio = g2.m * g1.precision - g1.m * g2.precision
    tol = _IDENTITY_TOL * max(1.0, g1.audits + g2.audits)
    left = d_audits >= -tol
    right = d_ratio >= -tol
    inverse_left = d_audits <= tol
    inverse_right = d_ratio <= tol
    passed = (left and right) or (inverse_left and inverse_right)
    return LemmaReport(True, passed, left, right)


def lemma2_check(alpha: float, beta: float, g1: GroupStats, g2: GroupStats) -> LemmaReport:
    """Equalized-odds identity: with shared audit rates (alpha, beta),
    A2 - A1 = (beta - alpha) (m2 - m1); the sign predicts which group is
    audited more."""
    scale = max(1.0, g1.n, g2.n)
    if abs(g1.n - g2.n) > _IDENTITY_TOL * scale:
        return LemmaReport(False, None, detail="groups must have equal size")
    for g in (g1, g2):
        if g.m <= 0 or g.r <= 0:
            return LemmaReport(False, None, detail="both label classes must be present")
        if abs(g.alpha - alpha) > _IDENTITY_TOL or abs(g.beta - beta) > _IDENTITY_TOL:
            return LemmaReport(False, None, detail="groups do not share the claimed (alpha, beta)")
    lhs = g2.audits - g1.audits
    rhs = (beta - alpha) * (g2.m - g1.m)
    tol = _IDENTITY_TOL * max(1.0, abs(lhs), abs(rhs), g1.n)
    passed = abs(lhs - rhs) <= tol
    direction = "equal" if rhs == 0 else ("group2" if rhs > 0 else "group1")
    return LemmaReport(True, passed, lhs >= -tol, rhs >= -tol, detail=f"higher-audit group: {direction}")


def compute_metrics(label: str, alloc: Allocation, pop: Population, oracle: Allocation | None = None,
                    tau: float = DE_MINIMIS) -> MetricsReport:
    """Bundle the standard evaluation suite for one allocation."""
    rev = revenue(alloc, pop)
    cost = total_cost(alloc, pop)
    overlap = None
    if oracle is not None and isinstance(alloc.budget, RateBudget):
        overlap = oracle_overlap(alloc, oracle, pop, alloc.budget.k)
    return MetricsReport(
        label=label,
        revenue=rev,
        no_change_rate=no_change_rate(alloc, pop, tau),
        cost=cost,
        net_revenue=rev - cost,
        oracle_overlap=overlap,
        audit_rate_by_bucket=tuple(audit_rate_by_bucket(alloc, pop)) if pop.bucketed else (),
        tau=tau,
    )
