"""Acceptance criteria, one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline.
"""

import hashlib
import time
from pathlib import Path

import numpy as np
import pytest

from audit_alloc.allocation import (
    DollarBudget,
    RateBudget,
    max_monotone_mass,
    monotone_allocation,
    oracle_allocation,
    roi_allocation,
    topk_allocation,
)
from audit_alloc.fairness import FairnessConstraint, constraint_disparity, fit_reduction
from audit_alloc.metrics import lemma1_check, lemma2_check, no_change_rate, oracle_overlap, revenue
from audit_alloc.population import (
    PopulationConfig,
    assign_buckets,
    generate_population,
    weighted_subsample,
)
from audit_alloc.scoring import (
    ModelSpec,
    ScoreVector,
    TargetKind,
    fit_on_arrays,
    fit_scorer,
    logistic_loss_grad,
    score,
)
from audit_alloc.suites import (
    random_equal_tpr_groups,
    random_equalized_odds_groups,
    run_suite,
)
from conftest import make_population


def report(number: int, name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {number} [{status}] {name}" + (f" ({detail})" if detail else ""))
    assert passed, f"criterion {number} failed: {name} {detail}"


def random_bucketed(rng, n_max, n_buckets):
    n = int(rng.integers(max(2 * n_buckets, 4), n_max + 1))
    while True:
        buckets = rng.integers(1, n_buckets + 1, size=n)
        if len(np.unique(buckets)) == n_buckets:
            break
    return make_population(
        rng.uniform(1, 100, n), rng.normal(size=n) * 100,
        weights=rng.uniform(0.5, 2.0, n), costs=rng.uniform(0.2, 3.0, n),
        buckets=buckets, n_buckets=n_buckets,
    )


def test_criterion_1_solver_oracle_equivalence(tmp_path):
    start = time.time()
    suite = run_suite("solver-oracle", tmp_path / "solver")
    elapsed = time.time() - start
    detail = "; ".join(f"{name}: {d}" for name, _, d in suite.rows)
    report(1, "solver-oracle equivalence (1e-6 LP, 1e-9 knapsack, <60s)",
           suite.ok and elapsed < 60, f"{detail}; wall={elapsed:.1f}s")


def test_criterion_2_budget_exactness():
    rng = np.random.default_rng(202)
    failures = 0
    checked = 0
    for trial in range(1000):
        kind = ("topk", "roi", "monotone")[trial % 3]
        if kind == "monotone":
            pop = random_bucketed(rng, 18, 3)
        else:
            n = int(rng.integers(3, 30))
            pop = make_population(
                rng.uniform(1, 50, n), rng.normal(size=n) * 100,
                weights=rng.uniform(0.5, 2.0, n), costs=rng.uniform(0.2, 3.0, n))
        scores = ScoreVector(pop.ids.copy(), rng.uniform(0, 1, len(pop)))
        if kind == "roi":
            total = float(np.sum(pop.weight * pop.cost))
            budget = DollarBudget(float(rng.uniform(0.05, 0.95)) * total)
            alloc = roi_allocation(scores, pop, budget)
            spent = float(np.sum(alloc.alpha * pop.weight * pop.cost))
            ok = spent <= budget.dollars * (1 + 1e-9) and abs(spent - budget.dollars) <= 1e-9 * max(1.0, budget.dollars)
        else:
            if kind == "monotone":
                k = float(rng.uniform(0.1, 0.8)) * max_monotone_mass(pop) / pop.total_weight
                alloc = monotone_allocation(scores, pop, RateBudget(k))
            else:
                k = float(rng.uniform(0.05, 0.95))
                alloc = topk_allocation(scores, pop, RateBudget(k))
            mass = float(np.sum(alloc.alpha * pop.weight))
            ok = abs(mass / pop.total_weight - k) <= 1e-9
        if kind == "topk":
            s = scores.values
            selected = s[alloc.alpha == 1.0]
            excluded = s[alloc.alpha == 0.0]
            if len(selected) and len(excluded):
                ok = ok and selected.min() >= excluded.max() - 1e-12
            ok = ok and np.sum((alloc.alpha > 0) & (alloc.alpha < 1)) <= 1
        checked += 1
        if not ok:
            failures += 1
    report(2, "budget identities to 1e-9 and top-k exchange optimality",
           failures == 0, f"{checked} allocations, {failures} failures")


def test_criterion_3_lemma_identities():
    rng = np.random.default_rng(303)
    bad = 0
    for _ in range(500):
        g1, g2 = random_equal_tpr_groups(rng)
        r1 = lemma1_check(g1, g2)
        alpha, beta, h1, h2 = random_equalized_odds_groups(rng)
        r2 = lemma2_check(alpha, beta, h1, h2)
        if not (r1.applicable and r1.passed and r2.applicable and r2.passed):
            bad += 1
    report(3, "two-group audit identities hold exactly on 500 constructions",
           bad == 0, f"failures={bad}")


def test_criterion_4_oracle_sanity():
    rng = np.random.default_rng(404)
    k = 0.02
    overlap_ok = True
    nochange_ok = True
    dominance_ok = True
    for seed in range(20):
        pop = assign_buckets(generate_population(PopulationConfig(n_records=2000, seed=seed)), 10)
        oracle = oracle_allocation(pop, RateBudget(k))
        overlap_ok &= oracle_overlap(oracle, oracle, pop, k) == pytest.approx(1.0)
        mis_mass = float(np.sum(pop.weight[pop.misreport > 200.0]))
        if k * pop.total_weight <= mis_mass:
            nochange_ok &= no_change_rate(oracle, pop, 200.0) == 0.0
        best = revenue(oracle, pop)
        for spec in (ModelSpec("logistic", seed=seed),
                     ModelSpec("random_forest", {"n_estimators": 10, "max_depth": 6}, seed=seed)):
            scorer = fit_scorer(spec, pop, TargetKind.classification(200.0))
            alloc = topk_allocation(score(scorer, pop), pop, RateBudget(k))
            dominance_ok &= revenue(alloc, pop) <= best + 1e-9
    report(4, "oracle self-overlap 1.0, zero no-change, revenue dominance on 20 seeds",
           overlap_ok and nochange_ok and dominance_ok,
           f"overlap={overlap_ok} nochange={nochange_ok} dominance={dominance_ok}")


def test_criterion_5_qualitative_replication(tmp_path):
    start = time.time()
    suite = run_suite("paper-qualitative", tmp_path / "qual")
    elapsed = time.time() - start
    detail = "; ".join(f"{name.split()[0]}..: {d}" for name, _, d in suite.rows)
    report(5, "qualitative replication (regression ordering, ROI regressivity, monotone trade-off)",
           suite.ok and elapsed < 600, f"wall={elapsed:.0f}s; {detail}")


def test_criterion_6_in_processing_guarantee():
    base_pop = generate_population(PopulationConfig(n_records=30_000, seed=606))
    train = assign_buckets(weighted_subsample(base_pop, 10_000, 607), 2)
    results = []
    ok = True
    for ctor in (FairnessConstraint.demographic_parity,
                 FairnessConstraint.equal_tpr,
                 FairnessConstraint.equalized_odds):
        constraint = ctor(0.01)
        red = fit_reduction(ModelSpec("logistic"), train, constraint, max_iters=50, seed=11)
        disparity = constraint_disparity(score(red, train), train, constraint, 200.0)
        gap = disparity.constraint_gap(weighted=False)
        bound = 2 * (0.01 + red.duality_gap)
        ok &= gap <= bound
        results.append(f"{constraint.kind}: gap={gap:.4f} bound={bound:.4f}")
    report(6, "in-processing disparity within 2(eps + reported gap) on 10k subsample",
           ok, "; ".join(results))


def test_criterion_7_determinism(tmp_path):
    identical = True
    for name in ("threshold-sweep", "lemma-properties"):
        hashes = []
        for run in ("a", "b"):
            out = tmp_path / f"{name}-{run}"
            run_suite(name, out)
            hashes.append({
                p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                for p in Path(out).iterdir() if p.suffix == ".csv"
            })
        identical &= hashes[0] == hashes[1] and len(hashes[0]) > 0
    report(7, "suites rerun with identical config+seed emit byte-identical CSVs", identical)


def test_criterion_8_numerical_checks():
    rng = np.random.default_rng(808)
    grad_ok = True
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(5, 40))
        d = int(rng.integers(1, 6))
        X = rng.normal(size=(n, d))
        y = (rng.random(n) < 0.5).astype(float)
        if y.min() > 0.5 or y.max() <= 0.5:
            y[0] = 1.0 - y[0]
        w = rng.uniform(0.5, 2.0, n)
        theta = rng.normal(size=d + 1)
        l2 = float(rng.uniform(0, 0.1))
        _, grad = logistic_loss_grad(theta, X, y, w, l2)
        h = 1e-6
        for j in range(d + 1):
            e = np.zeros(d + 1)
            e[j] = h
            lp, _ = logistic_loss_grad(theta + e, X, y, w, l2)
            lm, _ = logistic_loss_grad(theta - e, X, y, w, l2)
            numeric = (lp - lm) / (2 * h)
            rel = abs(grad[j] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, rel)
            grad_ok &= rel <= 1e-5

    dup_ok = True
    worst_dup = 0.0
    for trial in range(5):
        n = 50
        X = rng.normal(size=(n, 3))
        y = (X[:, 0] + 0.4 * rng.normal(size=n) > 0).astype(float)
        weights = rng.integers(1, 4, n).astype(float)
        spec = ModelSpec("logistic", {"tol": 1e-12})
        weighted = fit_on_arrays(spec, X, y, weights, TargetKind.classification())
        reps = np.repeat(np.arange(n), weights.astype(int))
        duplicated = fit_on_arrays(spec, X[reps], y[reps], np.ones(len(reps)), TargetKind.classification())
        diff = np.max(np.abs(
            np.concatenate([[weighted.intercept], weighted.coef])
            - np.concatenate([[duplicated.intercept], duplicated.coef])
        ))
        worst_dup = max(worst_dup, diff)
        dup_ok &= diff <= 1e-6
    report(8, "gradient check (1e-5) and weighted-vs-duplicated logistic optima (1e-6)",
           grad_ok and dup_ok, f"worst_grad_rel={worst:.2e} worst_optima_diff={worst_dup:.2e}")
