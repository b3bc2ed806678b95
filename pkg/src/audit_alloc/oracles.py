"""Independent reference solvers for checking the allocation optimizers.

These deliberately avoid the production code paths: the knapsack reference
enumerates subsets, and the monotone-LP reference enumerates the vertex
structure of the bucket-mass polytope. Both are exponential-ish and only
meant for small instances.
"""

from __future__ import annotations

from itertools import product

import numpy as np

__all__ = ["fractional_knapsack_bruteforce", "monotone_lp_bruteforce"]


def fractional_knapsack_bruteforce(values, costs, budget: float) -> float:
    """Optimal value of max sum(a*value) s.t. sum(a*cost) <= budget, a in [0,1].

    Every LP vertex takes some subset fully plus at most one fractional item,
    so enumerating subsets and the fractional complement item is exact.
    Limited to ~15 items.
    """
    values = np.asarray(values, dtype=float)
    costs = np.asarray(costs, dtype=float)
    n = len(values)
    if n > 20:
        raise ValueError("brute force limited to small instances")
    best = 0.0
    for mask in range(1 << n):
        take = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        cost = costs[take].sum()
        if cost > budget + 1e-12:
            continue
        value = values[take].sum()
        best = max(best, value)
        slack = budget - cost
        for j in range(n):
            if not take[j]:
                frac = min(1.0, slack / costs[j]) if costs[j] > 0 else 1.0
                best = max(best, value + frac * values[j])
    return best


def _prefix_value(scores, weights) -> tuple[np.ndarray, np.ndarray]:
    """Greedy per-bucket value function: cumulative (mass, value) breakpoints."""
    order = np.argsort(-scores, kind="stable")
    mass = np.concatenate([[0.0], np.cumsum(weights[order])])
    value = np.concatenate([[0.0], np.cumsum(scores[order] * weights[order])])
    return mass, value


def _value_at(mass_pts, value_pts, a: float) -> float:
    return float(np.interp(a, mass_pts, value_pts))


def _compositions(n_buckets: int):
    """All ways to group buckets 1..B into consecutive equal-mass chains."""
    if n_buckets == 0:
        yield ()
        return
    for first in range(1, n_buckets + 1):
        for rest in _compositions(n_buckets - first):
            yield (first,) + rest


def monotone_lp_bruteforce(scores, weights, buckets, total_mass: float) -> float:
    """Exact optimum of the monotone-bucket-mass LP by vertex enumeration.

    At an optimal vertex the bucket masses split into consecutive chains of
    equal mass, and all but one chain mass sits at a breakpoint of its greedy
    value function (the free one is pinned by the budget). Enumerates every
    chain structure and breakpoint assignment; exact but exponential in the
    bucket count.
    """
    scores = np.maximum(np.asarray(scores, dtype=float), 0.0)
    weights = np.asarray(weights, dtype=float)
    buckets = np.asarray(buckets, dtype=int)
    labels = np.unique(buckets)
    per_bucket = []
    for b in labels:
        rows = buckets == b
        per_bucket.append(_prefix_value(scores[rows], weights[rows]))
    n_buckets = len(per_bucket)

    best = -np.inf
    for comp in _compositions(n_buckets):
        # chains of consecutive buckets sharing one mass value
        spans = []
        start = 0
        for size in comp:
            spans.append(list(range(start, start + size)))
            start += size
        k = len(spans)
        caps = []
        breakpoint_sets = []
        for span in spans:
            cap = min(per_bucket[b][0][-1] for b in span)
            caps.append(cap)
            pts = set([0.0, cap])
            for b in span:
                pts.update(m for m in per_bucket[b][0] if m <= cap + 1e-12)
            breakpoint_sets.append(sorted(pts))
        sizes = [len(span) for span in spans]

        for free in range(k):
            others = [j for j in range(k) if j != free]
            for assignment in product(*(breakpoint_sets[j] for j in others)):
                t = [0.0] * k
                for j, val in zip(others, assignment):
                    t[j] = val
                used = sum(sizes[j] * t[j] for j in others)
                remaining = total_mass - used
                if sizes[free] == 0:
                    continue
                t[free] = remaining / sizes[free]
                if t[free] < -1e-9 or t[free] > caps[free] + 1e-9:
                    continue
                t[free] = min(max(t[free], 0.0), caps[free])
                if any(t[j] > t[j + 1] + 1e-9 for j in range(k - 1)):
                    continue
                if abs(sum(sizes[j] * t[j] for j in range(k)) - total_mass) > 1e-6 * max(1.0, total_mass):
                    continue
                value = 0.0
                for j, span in enumerate(spans):
                    for b in span:
                        value += _value_at(*per_bucket[b], t[j])
                best = max(best, value)
    if best == -np.inf:
        raise ValueError("no feasible monotone allocation at this budget")
    return best
