"""Turn scores, costs, and weights into audit allocations under a budget.

Three regimes: a rate budget (top-k by score until a fixed share of the
weighted population is audited), a rate budget with nondecreasing per-bucket
audit mass (a linear program), and a dollar budget (fractional knapsack,
greedy by score-to-cost ratio).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import BudgetError, MissingCellError
from .population import Population
from .scoring.base import ScoreVector
from .stats import weighted_quantile

__all__ = [
    "RateBudget",
    "DollarBudget",
    "Allocation",
    "CostModel",
    "topk_allocation",
    "oracle_allocation",
    "monotone_allocation",
    "roi_allocation",
    "estimate_costs",
    "build_cost_model",
    "default_cost_model",
]

DEFAULT_AUDIT_RATE = 0.00644


@dataclass(frozen=True)
class RateBudget:
    """Audit a fixed share k of the weighted population."""

    k: float = DEFAULT_AUDIT_RATE

    def __post_init__(self):
        if not (0.0 < self.k <= 1.0):
            raise BudgetError(f"rate budget k must lie in (0, 1], got {self.k}")


@dataclass(frozen=True)
class DollarBudget:
    """Cap total weighted examiner cost."""

    dollars: float = 125_000_000.0

    def __post_init__(self):
        if not self.dollars > 0:
            raise BudgetError(f"dollar budget must be positive, got {self.dollars}")


@dataclass(frozen=True)
class Allocation:
    """Per-record audit intensity in [0, 1], aligned with a population."""

    ids: np.ndarray
    alpha: np.ndarray
    budget: RateBudget | DollarBudget
    spent: float

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64)
        alpha = np.array(self.alpha, dtype=np.float64)
        if ids.shape != alpha.shape or ids.ndim != 1:
            raise ValueError("ids and alpha must be aligned 1-d arrays")
        if np.any(alpha < -1e-12) or np.any(alpha > 1 + 1e-12):
            raise ValueError("intensities must lie in [0, 1]")
        alpha = np.clip(alpha, 0.0, 1.0)
        for name, arr in (("ids", ids), ("alpha", alpha)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.ids)

    def aligned_to(self, pop: Population) -> np.ndarray:
        if np.array_equal(self.ids, pop.ids):
            return self.alpha
        pos = {int(i): j for j, i in enumerate(self.ids)}
        try:
            idx = np.array([pos[int(i)] for i in pop.ids], dtype=np.int64)
        except KeyError as e:
            raise ValueError(f"population id {e} missing from allocation") from None
        return self.alpha[idx]

    def save_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "alpha"])
            for i, a in zip(self.ids, self.alpha):
                writer.writerow([int(i), repr(float(a))])

    @classmethod
    def load_csv(cls, path, budget=None) -> "Allocation":
        """Read an ``id,alpha`` file. The spent amount is not recoverable
        without the population's weights and is set to NaN."""
        with Path(path).open("r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["id", "alpha"]:
                raise ValueError(f"expected header id,alpha, got {header}")
            ids, alpha = [], []
            for row in reader:
                ids.append(int(row[0]))
                alpha.append(float(row[1]))
        ids = np.array(ids, dtype=np.int64)
        alpha = np.array(alpha)
        return cls(ids, alpha, budget if budget is not None else RateBudget(), float("nan"))


def _prefix_fill(order: np.ndarray, usage: np.ndarray, target: float) -> np.ndarray:
    """Fill records along `order` until cumulative `usage` reaches `target`.

    Returns intensities with at most one fractional entry (the boundary
    record, set so the cumulative usage lands on the target exactly).
    """
    alpha = np.zeros(len(usage))
    if target <= 0 or len(order) == 0:
        return alpha
    u = usage[order]
    cum = np.cumsum(u)
    j = int(np.searchsorted(cum, target, side="left"))
    if j >= len(order):
        alpha[order] = 1.0
        return alpha
    alpha[order[:j]] = 1.0
    before = cum[j - 1] if j > 0 else 0.0
    alpha[order[j]] = min(1.0, max(0.0, (target - before) / u[j]))
    return alpha


def _score_order(scores: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending, ties broken by id ascending."""
    return np.lexsort((ids, -scores))


def topk_allocation(scores: ScoreVector, pop: Population, budget: RateBudget) -> Allocation:
    """Audit the highest-scored records until k of the weighted population
    is covered; the boundary record gets a fractional intensity."""
    s = scores.aligned_to(pop)
    target = budget.k * pop.total_weight
    order = _score_order(s, pop.ids)
    alpha = _prefix_fill(order, pop.weight, target)
    return Allocation(pop.ids.copy(), alpha, budget, float(np.sum(alpha * pop.weight)))


def oracle_allocation(pop: Population, budget: RateBudget) -> Allocation:
    """Top-k by the true misreport amount."""
    from .scoring import oracle_scorer

    return topk_allocation(oracle_scorer(pop), pop, budget)


def roi_allocation(scores: ScoreVector, pop: Population, budget: DollarBudget) -> Allocation:
    """Fractional-knapsack allocation under a dollar budget.

    Records are taken greedily by score-to-cost ratio until the weighted
    cost reaches the budget (the classic exact rule for the fractional
    knapsack). Records with negative scores are never audited.
    """
    s = scores.aligned_to(pop)
    ratio = s / pop.cost
    keep = np.flatnonzero(s >= 0)
    order = keep[_score_order(ratio[keep], pop.ids[keep])]
    usage = pop.weight * pop.cost
    alpha = _prefix_fill(order, usage, budget.dollars)
    return Allocation(pop.ids.copy(), alpha, budget, float(np.sum(alpha * usage)))


def _bucket_rows(pop: Population) -> list[np.ndarray]:
    if not pop.bucketed:
        raise ValueError("population must be bucketed first (assign_buckets)")
    return [np.flatnonzero(pop.bucket == b) for b in range(1, pop.n_buckets + 1)]


def max_monotone_mass(pop: Population) -> float:
    """Largest weighted audit mass a monotone-by-bucket allocation can reach."""
    bucket_w = np.array([pop.weight[rows].sum() for rows in _bucket_rows(pop)])
    caps = np.minimum.accumulate(bucket_w[::-1])[::-1]
    return float(caps.sum())


def monotone_allocation(scores: ScoreVector, pop: Population, budget: RateBudget) -> Allocation:
    """Rate-budget allocation whose per-bucket audit masses are nondecreasing
    in the income bucket.

    Maximizes the weighted sum of scores subject to the box, budget, and
    bucket-mass monotonicity constraints. Solved exactly as a linear program;
    a second solve canonicalizes among optima by preferring the most-equal
    bucket-mass vector, and intensities within each bucket are then refilled
    greedily by score so at most one record per bucket is fractional.
    Negative scores contribute zero to the objective (they are floored: a
    record predicted to owe nothing is never worth auditing).
    """
    rows_by_bucket = _bucket_rows(pop)
    s = np.maximum(scores.aligned_to(pop), 0.0)
    w = pop.weight
    n = len(pop)
    n_buckets = pop.n_buckets
    target = budget.k * pop.total_weight
    if target > max_monotone_mass(pop) * (1 + 1e-12):
        raise BudgetError(
            f"budget mass {target:.6g} exceeds the maximum monotone-feasible mass"
        )

    objective = s * w
    a_eq = sp.csr_matrix(w[None, :])
    rows_idx, cols_idx, vals = [], [], []
    for b in range(n_buckets - 1):
        for i in rows_by_bucket[b]:
            rows_idx.append(b)
            cols_idx.append(i)
            vals.append(w[i])
        for i in rows_by_bucket[b + 1]:
            rows_idx.append(b)
            cols_idx.append(i)
            vals.append(-w[i])
    a_ub = sp.csr_matrix((vals, (rows_idx, cols_idx)), shape=(n_buckets - 1, n))

    res = linprog(
        -objective, A_ub=a_ub, b_ub=np.zeros(n_buckets - 1),
        A_eq=a_eq, b_eq=[target], bounds=(0.0, 1.0), method="highs",
    )
    if not res.success:
        raise BudgetError(f"monotone allocation LP failed: {res.message}")
    optimum = float(objective @ res.x)

    # canonicalize: among optimal solutions prefer the most-equal bucket masses
    bucket_no = np.empty(n)
    for b, rows in enumerate(rows_by_bucket, start=1):
        bucket_no[rows] = b
    tie_objective = bucket_no * w
    guard = sp.vstack([a_ub, sp.csr_matrix(-objective[None, :])], format="csr")
    guard_rhs = np.concatenate([np.zeros(n_buckets - 1), [-(optimum - 1e-9 * max(1.0, abs(optimum)))]])
    res2 = linprog(
        tie_objective, A_ub=guard, b_ub=guard_rhs,
        A_eq=a_eq, b_eq=[target], bounds=(0.0, 1.0), method="highs",
    )
    x = res2.x if res2.success else res.x

    # repair masses to an exactly feasible monotone vector summing to target
    masses = np.array([float(w[rows] @ x[rows]) for rows in rows_by_bucket])
    steps = np.maximum(np.diff(np.concatenate([[0.0], masses])), 0.0)
    masses = np.cumsum(steps)
    total = masses.sum()
    if total > 0:
        masses *= target / total

    alpha = np.zeros(n)
    for rows, mass in zip(rows_by_bucket, masses):
        order = rows[_score_order(s[rows], pop.ids[rows])]
        alpha += _prefix_fill(order, w, min(mass, float(w[rows].sum())))
    return Allocation(pop.ids.copy(), alpha, budget, float(np.sum(alpha * w)))


@dataclass(frozen=True)
class CostModel:
    """Mean audit cost per (income bucket, activity group) cell."""

    table: dict

    def __post_init__(self):
        for cell, cost in self.table.items():
            if not cost > 0:
                raise ValueError(f"cost model cell {cell} must be positive, got {cost}")

    def lookup(self, bucket: int, group: int) -> float:
        try:
            return self.table[(bucket, group)]
        except KeyError:
            raise MissingCellError(
                f"cost model has no cell for bucket={bucket}, group={group}",
                bucket=bucket,
                group=group,
            ) from None

    @property
    def cell_ratio(self) -> float:
        costs = list(self.table.values())
        return max(costs) / min(costs)

    def save_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bucket", "group", "cost"])
            for (bucket, group), cost in sorted(self.table.items()):
                writer.writerow([bucket, group, repr(float(cost))])

    @classmethod
    def load_csv(cls, path) -> "CostModel":
        table = {}
        with Path(path).open("r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["bucket", "group", "cost"]:
                raise ValueError(f"expected header bucket,group,cost, got {header}")
            for row in reader:
                table[(int(row[0]), int(row[1]))] = float(row[2])
        return cls(table)


def estimate_costs(pop: Population, model: CostModel, groups=None) -> np.ndarray:
    """Per-record cost via (bucket, group) table lookup."""
    if not pop.bucketed:
        raise ValueError("population must be bucketed first (assign_buckets)")
    groups = np.zeros(len(pop), dtype=np.int64) if groups is None else np.asarray(groups, dtype=np.int64)
    return np.array([model.lookup(int(b), int(g)) for b, g in zip(pop.bucket, groups)])


def build_cost_model(pop: Population, groups=None, winsorize: tuple[float, float] | None = (0.01, 0.99)) -> CostModel:
    """Average observed costs into (bucket, group) cells.

    Raw observations are winsorized at the given weighted quantiles before
    averaging; pass None to skip.
    """
    if not pop.bucketed:
        raise ValueError("population must be bucketed first (assign_buckets)")
    groups = np.zeros(len(pop), dtype=np.int64) if groups is None else np.asarray(groups, dtype=np.int64)
    costs = pop.cost
    if winsorize is not None:
        lo, hi = weighted_quantile(costs, pop.weight, list(winsorize))
        costs = np.clip(costs, lo, hi)
    table = {}
    for bucket in np.unique(pop.bucket):
        for group in np.unique(groups):
            mask = (pop.bucket == bucket) & (groups == group)
            if mask.any():
                table[(int(bucket), int(group))] = float(
                    np.sum(costs[mask] * pop.weight[mask]) / np.sum(pop.weight[mask])
                )
    return CostModel(table)


def default_cost_model(n_buckets: int = 10, base: float = 60.0, ratio: float = 41.0) -> CostModel:
    """Geometric per-bucket mean costs with the given top/bottom ratio."""
    step = ratio ** (1.0 / (n_buckets - 1))
    return CostModel({(b, 0): base * step ** (b - 1) for b in range(1, n_buckets + 1)})
