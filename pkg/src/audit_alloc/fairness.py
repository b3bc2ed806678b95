"""Group-fairness interventions over income buckets and disparity reports.

``fit_reduction`` runs a Lagrangian multiplicative-weights scheme that turns
each round into a cost-sensitive fit of the base learner, then returns the
candidate with the smallest duality gap: either a single iterate or the
best convex mixture of iterates, realized deterministically per record id.
``postprocess_thresholds`` leaves a fitted scorer untouched and picks
per-bucket decision thresholds, mixing thresholds (seeded per record id)
when no deterministic threshold hits the target exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DegenerateGroupError, DegenerateLabelError
from .population import DE_MINIMIS, Population, misreport_flags
from .scoring import ModelSpec, Scorer, ScoreVector, TargetKind, fit_on_arrays
from .scoring.base import check_dimensions
from .stats import derive_seed

__all__ = [
    "FairnessConstraint",
    "DisparityReport",
    "ReducedScorer",
    "ThresholdScorer",
    "fit_reduction",
    "postprocess_thresholds",
    "constraint_disparity",
]

CONSTRAINT_KINDS = ("demographic_parity", "equal_tpr", "equalized_odds")

_INITIAL_MULTIPLIER = 0.1


@dataclass(frozen=True)
class FairnessConstraint:
    """Which group quantity must be equal across income buckets, with slack."""

    kind: str
    epsilon: float = 0.01

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ConfigurationError(f"unknown constraint {self.kind!r}; choose from {CONSTRAINT_KINDS}")
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be nonnegative")

    @classmethod
    def demographic_parity(cls, epsilon: float = 0.01):
        return cls("demographic_parity", epsilon)

    @classmethod
    def equal_tpr(cls, epsilon: float = 0.01):
        return cls("equal_tpr", epsilon)

    @classmethod
    def equalized_odds(cls, epsilon: float = 0.01):
        return cls("equalized_odds", epsilon)


# ---------------------------------------------------------------------------
# moments: each row is a signed linear functional of the decision vector whose
# value must stay below epsilon


class _Moments:
    """Signed deviation-from-overall moments for one constraint."""

    def __init__(self, constraint: FairnessConstraint, pop: Population, y: np.ndarray):
        if not pop.bucketed:
            raise ValueError("population must be bucketed first (assign_buckets)")
        w = pop.weight / pop.weight.sum()
        rows = []
        conditions = []
        if constraint.kind == "demographic_parity":
            conditions.append(np.ones(len(pop), dtype=bool))
        if constraint.kind in ("equal_tpr", "equalized_odds"):
            conditions.append(y > 0.5)
        if constraint.kind == "equalized_odds":
            conditions.append(y <= 0.5)
        for cond in conditions:
            total = w[cond].sum()
            if total <= 0:
                continue
            base = np.where(cond, w / total, 0.0)
            for b in range(1, pop.n_buckets + 1):
                cell = cond & (pop.bucket == b)
                cell_w = w[cell].sum()
                if cell_w <= 0:
                    continue
                coeff = np.where(cell, w / cell_w, 0.0) - base
                rows.append(coeff)
                rows.append(-coeff)
        self.coeffs = np.array(rows) if rows else np.zeros((0, len(pop)))

    def violations(self, decisions: np.ndarray) -> np.ndarray:
        return self.coeffs @ decisions

    @property
    def count(self) -> int:
        return len(self.coeffs)


class _ConstantScorer(Scorer):
    family = "constant"

    def __init__(self, value: float, feature_count: int):
        super().__init__(TargetKind.classification(), feature_count)
        self.value = float(value)

    def score_features(self, X):
        return np.full(len(X), self.value)

    def _params_dict(self):
        return {"value": self.value}


class ReducedScorer(Scorer):
    """Scorer returned by the in-processing reduction.

    A weighted mixture of base iterates, realized deterministically: each
    record id hashes to one component, whose probability becomes the score.
    Thresholding the scores at 0.5 therefore reproduces exactly the decisions
    whose constraint violation and duality gap are reported here. A
    single-component mixture degenerates to that iterate.
    """

    family = "fairness_reduction"

    def __init__(self, components: list[Scorer], weights, constraint: FairnessConstraint,
                 realize_seed: int, duality_gap: float, violation: float,
                 converged: bool, iterations: int):
        super().__init__(components[0].target_kind, components[0].feature_count)
        self.components = list(components)
        self.weights = np.asarray(weights, dtype=float)
        self.constraint = constraint
        self.realize_seed = int(realize_seed)
        self.duality_gap = float(duality_gap)
        self.violation = float(violation)
        self.converged = bool(converged)
        self.iterations = int(iterations)

    def assign_components(self, ids) -> np.ndarray:
        if len(self.components) == 1:
            return np.zeros(len(ids), dtype=np.int64)
        return _assign_mixture(ids, self.weights, self.realize_seed)

    def score_features(self, X):
        if len(self.components) == 1:
            return self.components[0].score_features(X)
        raise ConfigurationError("mixture scorers need record ids; score a population")

    def score_population(self, pop: Population) -> np.ndarray:
        check_dimensions(self, pop)
        which = self.assign_components(pop.ids)
        out = np.zeros(len(pop))
        for j, comp in enumerate(self.components):
            mask = which == j
            if mask.any():
                out[mask] = comp.score_features(pop.features[mask])
        return out

    def _params_dict(self):
        return {
            "constraint": {"kind": self.constraint.kind, "epsilon": self.constraint.epsilon},
            "weights": self.weights.tolist(),
            "realize_seed": self.realize_seed,
            "duality_gap": self.duality_gap,
            "violation": self.violation,
            "converged": self.converged,
            "iterations": self.iterations,
            "components": [c.to_dict() for c in self.components],
        }


def _base_scores(scorer: Scorer, pop: Population) -> np.ndarray:
    if hasattr(scorer, "score_population"):
        return np.asarray(scorer.score_population(pop), dtype=float)
    return np.asarray(scorer.score_features(pop.features), dtype=float)


def _assign_mixture(ids, weights, realize_seed: int) -> np.ndarray:
    """Deterministic component index per record id for a weighted mixture."""
    cum = np.cumsum(np.asarray(weights, dtype=float))
    cum = cum / cum[-1]
    draws = np.array([derive_seed(realize_seed, "mix", int(i)) / 2.0**64 for i in ids])
    return np.searchsorted(cum, draws, side="right").clip(0, len(cum) - 1)


def _cost_sensitive_fit(base: ModelSpec, X, delta, seed: int, feature_count: int) -> Scorer:
    """Fit the base family on relabeled data: predicting 1 is worth -delta_i.

    Records are weighted by |delta| and labeled by the sign; a degenerate
    relabeling collapses to the constant classifier.
    """
    labels = (delta < 0).astype(float)
    weights = np.abs(delta)
    keep = weights > 0
    spec = ModelSpec(base.family, base.hyperparameters, seed=seed, fit_mode="native_weights")
    if keep.sum() == 0:
        return _ConstantScorer(0.0, feature_count)
    try:
        return fit_on_arrays(spec, X[keep], labels[keep], weights[keep], TargetKind.classification())
    except DegenerateLabelError:
        return _ConstantScorer(float(labels[keep][0]), feature_count)


def fit_reduction(base: ModelSpec, train: Population, constraint: FairnessConstraint,
                  max_iters: int = 50, seed: int = 0, tau: float = DE_MINIMIS,
                  multiplier_bound: float = 100.0, learning_rate: float = 2.0,
                  gap_tol: float = 0.05) -> ReducedScorer:
    """Constrained training via multiplicative-weights Lagrangian reduction.

    Maintains nonnegative multipliers on the constraint's moment inequalities
    (l1-bounded by ``multiplier_bound``), fits the base learner cost-
    sensitively each round, and updates multipliers from observed violations.
    Returns whichever has the smaller duality gap: the best single iterate,
    or the best convex mixture of iterates realized per record id. A gap
    above ``gap_tol`` after ``max_iters`` sets ``converged=False`` on the
    result rather than raising.
    """
    if not train.bucketed:
        raise ValueError("training population must be bucketed first (assign_buckets)")
    X = train.features
    y = misreport_flags(train.misreport, tau).astype(float)
    if y.min() > 0.5 or y.max() <= 0.5:
        raise DegenerateLabelError("reduction needs both classes in the training set")
    w_hat = train.weight / train.weight.sum()
    moments = _Moments(constraint, train, y)
    eps = constraint.epsilon
    err_coeff = w_hat * (1.0 - 2.0 * y)  # err(h) = const + sum_i h_i * err_coeff_i
    err_const = float((w_hat * y).sum())

    lam = np.zeros(moments.count)
    lambda_hist = []
    iterates: list[tuple[Scorer, np.ndarray, float, np.ndarray]] = []
    for t in range(max_iters):
        delta = err_coeff + (moments.coeffs.T @ lam if moments.count else 0.0)
        scorer = _cost_sensitive_fit(base, X, delta, derive_seed(seed, "iter", t), train.feature_dim)
        decisions = (scorer.score_features(X) > 0.5).astype(float)
        g = moments.violations(decisions)
        err = err_const + float(err_coeff @ decisions)
        iterates.append((scorer, decisions, err, g))
        if moments.count:
            # multiplicative weights: grow where violated, decay where slack,
            # projected back onto the l1 ball of radius multiplier_bound
            if t == 0:
                lam = np.full(moments.count, _INITIAL_MULTIPLIER)
            lam = lam * np.exp(learning_rate * (g - eps))
            if lam.sum() > multiplier_bound:
                lam *= multiplier_bound / lam.sum()
            lambda_hist.append(lam.copy())

    # lower bound on the saddle value: by weak duality, min_h L(h, lam) is
    # valid for any multiplier; take the best certificate over a few candidates
    candidates = [np.zeros(moments.count)]
    if lambda_hist:
        hist = np.array(lambda_hist)
        candidates.extend([hist.mean(axis=0), hist[len(hist) // 2 :].mean(axis=0), hist[-1]])
    l_lower = -np.inf
    for j, lam in enumerate(candidates):
        br = _cost_sensitive_fit(
            base, X, err_coeff + (moments.coeffs.T @ lam if moments.count else 0.0),
            derive_seed(seed, "best-response", j), train.feature_dim,
        )
        br_decisions = (br.score_features(X) > 0.5).astype(float)
        value = err_const + float(err_coeff @ br_decisions)
        if moments.count:
            value += float(lam @ (moments.violations(br_decisions) - eps))
        l_lower = max(l_lower, value)

    # best single iterate by duality gap
    def l_max_of(err: float, g: np.ndarray) -> tuple[float, float]:
        excess = float(max(0.0, (g - eps).max())) if moments.count else 0.0
        return err + multiplier_bound * excess, excess

    best_single = None
    for idx, (scorer, _, err, g) in enumerate(iterates):
        l_max, excess = l_max_of(err, g)
        if best_single is None or l_max < best_single[1] - 1e-15:
            best_single = (idx, l_max, excess)

    # best mixture of iterates: minimize err + bound * (violation - eps)+ over
    # convex combinations (the same objective the gap accounting uses), then
    # realize it per record id with the seed that minimizes realized violation
    choice = _realize_best_mixture(
        iterates, train.ids, moments, eps, multiplier_bound, seed, err_const, err_coeff, l_max_of
    )
    single_scorer, single_l_max, single_excess = (
        iterates[best_single[0]][0], best_single[1], best_single[2]
    )
    if choice is not None and choice[1] < single_l_max - 1e-15:
        components, l_max, excess, weights, realize_seed = choice[0], choice[1], choice[2], choice[3], choice[4]
    else:
        components, weights, realize_seed = [single_scorer], [1.0], 0
        l_max, excess = single_l_max, single_excess
    gap = max(0.0, l_max - l_lower)
    return ReducedScorer(
        components, weights, constraint, realize_seed,
        duality_gap=gap, violation=excess,
        converged=gap <= gap_tol, iterations=max_iters,
    )


def _realize_best_mixture(iterates, ids, moments, eps, multiplier_bound, seed,
                          err_const, err_coeff, l_max_of):
    """LP-optimal convex combination of iterates, realized per record id.

    Returns (components, realized l_max, realized excess, weights, seed) or
    None when mixing cannot help (no moments, or the LP picks one iterate).
    """
    if moments.count == 0 or len(iterates) < 2:
        return None
    from scipy.optimize import linprog

    errs = np.array([it[2] for it in iterates])
    G = np.array([it[3] for it in iterates])  # (T, K) violations
    T = len(iterates)
    c = np.concatenate([errs, [multiplier_bound]])
    A_ub = np.concatenate([G.T, -np.ones((moments.count, 1))], axis=1)
    A_eq = np.concatenate([np.ones((1, T)), [[0.0]]], axis=1)

    best = None
    # the tighter target leaves headroom for per-record realization noise
    for target in (eps, 0.5 * eps):
        res = linprog(c, A_ub=A_ub, b_ub=np.full(moments.count, target),
                      A_eq=A_eq, b_eq=[1.0],
                      bounds=[(0.0, 1.0)] * T + [(0.0, None)], method="highs")
        if not res.success:
            continue
        q = res.x[:T]
        active = np.flatnonzero(q > 1e-9)
        if len(active) <= 1:
            continue
        components = [iterates[i][0] for i in active]
        weights = q[active] / q[active].sum()
        decisions = np.array([iterates[i][1] for i in active])
        n = decisions.shape[1]
        for j in range(20):
            realize_seed = derive_seed(seed, "realize", j)
            which = _assign_mixture(ids, weights, realize_seed)
            realized = decisions[which, np.arange(n)]
            g = moments.violations(realized)
            err = err_const + float(err_coeff @ realized)
            l_max, excess = l_max_of(err, g)
            # prefer feasible realizations, then near-equal objective values
            # with the most interior constraint margins
            key = (excess > 0, round(l_max, 4), float(g.max()) if len(g) else 0.0, l_max)
            if best is None or key < best[0]:
                best = (key, components, l_max, excess, weights, realize_seed)
    return None if best is None else best[1:]


# ---------------------------------------------------------------------------
# post-processing: per-bucket threshold rules


@dataclass(frozen=True)
class _ThresholdRule:
    """Randomized decision rule: predict 1 iff score > t, t drawn from
    (thresholds, probabilities)."""

    thresholds: tuple
    probabilities: tuple

    def expected(self, scores: np.ndarray) -> np.ndarray:
        out = np.zeros(len(scores))
        for t, q in zip(self.thresholds, self.probabilities):
            out += q * (scores > t)
        return out

    def realized(self, scores: np.ndarray, ids: np.ndarray, seed: int) -> np.ndarray:
        if len(self.thresholds) == 1:
            return (scores > self.thresholds[0]).astype(float)
        cum = np.cumsum(self.probabilities)
        out = np.zeros(len(scores))
        for j, (i, s) in enumerate(zip(ids, scores)):
            u = derive_seed(seed, "mix", int(i)) / 2.0**64
            t = self.thresholds[int(np.searchsorted(cum, u, side="right"))]
            out[j] = 1.0 if s > t else 0.0
        return out


class ThresholdScorer(Scorer):
    """Pure wrapper: base scorer plus per-bucket threshold rules.

    Ranking scores are (realized binary fair decision) x (base probability).
    The base scorer's parameters are untouched and retrievable via ``base``.
    """

    family = "fairness_postprocess"

    def __init__(self, base: Scorer, constraint: FairnessConstraint, rules: dict, seed: int):
        super().__init__(base.target_kind, base.feature_count)
        self.base = base
        self.constraint = constraint
        self.rules = rules
        self.seed = int(seed)

    def score_features(self, X):
        raise ConfigurationError("postprocessed scorers need bucket labels; score a bucketed population")

    def _rule_for(self, bucket: int) -> _ThresholdRule:
        try:
            return self.rules[int(bucket)]
        except KeyError:
            raise DegenerateGroupError(f"no threshold rule for bucket {bucket}", bucket=int(bucket)) from None

    def decision_probability(self, pop: Population) -> np.ndarray:
        """Expected fair decision per record (exact, no mixture sampling)."""
        check_dimensions(self, pop)
        if not pop.bucketed:
            raise ValueError("population must be bucketed first (assign_buckets)")
        p = _base_scores(self.base, pop)
        out = np.zeros(len(pop))
        for b in np.unique(pop.bucket):
            mask = pop.bucket == b
            out[mask] = self._rule_for(int(b)).expected(p[mask])
        return out

    def decide(self, pop: Population) -> np.ndarray:
        """Realized binary decisions; mixtures are resolved per record id."""
        check_dimensions(self, pop)
        if not pop.bucketed:
            raise ValueError("population must be bucketed first (assign_buckets)")
        p = _base_scores(self.base, pop)
        out = np.zeros(len(pop))
        for b in np.unique(pop.bucket):
            mask = pop.bucket == b
            out[mask] = self._rule_for(int(b)).realized(p[mask], pop.ids[mask], self.seed)
        return out

    def score_population(self, pop: Population) -> np.ndarray:
        return self.decide(pop) * _base_scores(self.base, pop)

    def _params_dict(self):
        return {
            "constraint": {"kind": self.constraint.kind, "epsilon": self.constraint.epsilon},
            "seed": self.seed,
            "rules": {
                str(b): {"thresholds": list(r.thresholds), "probabilities": list(r.probabilities)}
                for b, r in self.rules.items()
            },
            "base": self.base.to_dict(),
        }


def _weighted_rate(scores, weights, threshold) -> float:
    return float(np.sum(weights * (scores > threshold)) / weights.sum())


def _rate_curve(scores, weights):
    """Candidate thresholds (ascending) and the selection rate at each.

    Candidates span rate 1 (bottom sentinel) down to rate 0 (top sentinel)
    through the distinct scores, with 0.5 always present so the
    untouched-at-0.5 case stays deterministic.
    """
    top = max(1.0, float(scores.max()) if len(scores) else 1.0)
    candidates = np.unique(np.concatenate([scores, [-1.0, 0.5, top]]))
    rates = np.array([_weighted_rate(scores, weights, t) for t in candidates])
    return candidates, rates


def _match_rate_rule(scores, weights, target) -> _ThresholdRule:
    """Threshold rule whose expected selection rate equals `target` exactly.

    Prefers a deterministic threshold (0.5 first) when one is exact; falls
    back to mixing the two adjacent candidate thresholds."""
    candidates, rates = _rate_curve(scores, weights)
    exact = np.flatnonzero(np.abs(rates - target) <= 1e-12)
    if len(exact):
        for i in exact:
            if candidates[i] == 0.5:
                return _ThresholdRule((0.5,), (1.0,))
        return _ThresholdRule((float(candidates[exact[-1]]),), (1.0,))
    below = rates < target  # rates fall as thresholds rise
    if below.all():
        return _ThresholdRule((float(candidates[0]),), (1.0,))
    if not below.any():
        return _ThresholdRule((float(candidates[-1]),), (1.0,))
    hi = int(np.argmax(below))  # first candidate whose rate drops under target
    lo = hi - 1
    q = (target - rates[hi]) / (rates[lo] - rates[hi])
    return _ThresholdRule(
        (float(candidates[lo]), float(candidates[hi])), (float(q), float(1.0 - q))
    )


def _roc_chain(scores, weights, y):
    """Upper concave chain of the bucket's audit ROC, from (0,0) to (1,1)."""
    candidates, _ = _rate_curve(scores, weights)
    pos, neg = y > 0.5, y <= 0.5
    pts = [(1.0, 1.0), (0.0, 0.0)]
    for t in candidates:
        pts.append((
            _weighted_rate(scores[neg], weights[neg], t),
            _weighted_rate(scores[pos], weights[pos], t),
        ))
    pts = sorted(set(pts))
    chain = []
    for p in pts:
        while len(chain) >= 2:
            (x1, y1), (x2, y2) = chain[-2], chain[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                chain.pop()
            else:
                break
        chain.append(p)
    return chain, candidates, pos, neg


def _ray_exit(chain, direction) -> float:
    """Largest sigma with sigma*direction weakly under the concave chain."""
    dx, dy = direction
    if dx == 0.0 and dy == 0.0:
        return np.inf
    best = 0.0
    for (x1, y1), (x2, y2) in zip(chain, chain[1:]):
        if x2 == x1:
            if dx == 0.0 and y2 > 0:
                best = max(best, y2 / dy if dy > 0 else np.inf)
            continue
        slope = (y2 - y1) / (x2 - x1)
        denom = dy - dx * slope
        intercept = y1 - x1 * slope
        if abs(denom) < 1e-300:
            continue
        sigma = intercept / denom
        if sigma <= 0:
            continue
        x_at = sigma * dx
        if x1 - 1e-12 <= x_at <= x2 + 1e-12:
            best = max(best, sigma)
    return best


def _point_on_chain_rule(chain, candidates, scores, weights, y, pos, neg, point, reject_prob):
    """Mixture rule hitting `point` on the chain, diluted by a reject arm."""
    px, py = point
    for (x1, y1), (x2, y2) in zip(chain, chain[1:]):
        span = max(abs(x2 - x1), abs(y2 - y1))
        t_along = ((px - x1) / (x2 - x1)) if abs(x2 - x1) > 1e-15 else ((py - y1) / (y2 - y1) if span > 1e-15 else 0.0)
        if -1e-9 <= t_along <= 1 + 1e-9:
            on_edge = abs((x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)) <= 1e-9 * max(1.0, span)
            if on_edge:
                t_along = min(1.0, max(0.0, t_along))
                t1 = _threshold_for_point(candidates, scores, weights, pos, neg, (x1, y1))
                t2 = _threshold_for_point(candidates, scores, weights, pos, neg, (x2, y2))
                keep = 1.0 - reject_prob
                reject_t = float(max(1.0, scores.max() if len(scores) else 1.0))
                thresholds = (t1, t2, reject_t)
                probs = (keep * (1 - t_along), keep * t_along, reject_prob)
                return _ThresholdRule(thresholds, probs)
    raise ValueError("target point does not lie on the bucket ROC chain")


def _threshold_for_point(candidates, scores, weights, pos, neg, point) -> float:
    for t in candidates:
        fpr = _weighted_rate(scores[neg], weights[neg], t)
        tpr = _weighted_rate(scores[pos], weights[pos], t)
        if abs(fpr - point[0]) <= 1e-9 and abs(tpr - point[1]) <= 1e-9:
            return float(t)
    # corners not realized by any candidate threshold
    if point == (0.0, 0.0):
        return float(max(1.0, scores.max() if len(scores) else 1.0))
    if point == (1.0, 1.0):
        return float(scores.min() - 1.0 if len(scores) else -1.0)
    raise ValueError(f"no threshold realizes ROC point {point}")


def postprocess_thresholds(scorer: Scorer, train: Population, constraint: FairnessConstraint,
                           seed: int = 0) -> ThresholdScorer:
    """Per-bucket thresholds on a fitted classifier so the constraint holds
    exactly (in expectation) on the training set.

    The common target is the scorer's overall weighted rate at threshold 0.5
    (selection rate, TPR, or the (FPR, TPR) pair); for equalized odds the
    target is scaled back along the ray from the origin until it is feasible
    for every bucket's ROC hull.
    """
    if not scorer.target_kind.is_classification:
        raise ConfigurationError("postprocessing requires a classification scorer")
    if not train.bucketed:
        raise ValueError("training population must be bucketed first (assign_buckets)")
    p = _base_scores(scorer, train)
    y = misreport_flags(train.misreport, scorer.target_kind.tau).astype(float)
    w = train.weight
    buckets = sorted(int(b) for b in np.unique(train.bucket))
    for b in buckets:
        mask = train.bucket == b
        if not (y[mask] > 0.5).any():
            raise DegenerateGroupError(f"bucket {b} has no positive labels", bucket=b)
        if not (y[mask] <= 0.5).any():
            raise DegenerateGroupError(f"bucket {b} has no negative labels", bucket=b)

    rules: dict[int, _ThresholdRule] = {}
    if constraint.kind == "demographic_parity":
        target = _weighted_rate(p, w, 0.5)
        for b in buckets:
            mask = train.bucket == b
            rules[b] = _match_rate_rule(p[mask], w[mask], target)
    elif constraint.kind == "equal_tpr":
        pos = y > 0.5
        target = _weighted_rate(p[pos], w[pos], 0.5)
        for b in buckets:
            mask = (train.bucket == b) & pos
            rules[b] = _match_rate_rule(p[mask], w[mask], target)
    else:
        neg = y <= 0.5
        pos = y > 0.5
        target = (
            _weighted_rate(p[neg], w[neg], 0.5),
            _weighted_rate(p[pos], w[pos], 0.5),
        )
        if target[0] == 0.0 or target[1] == 0.0:
            rules = _axis_aligned_eo_rules(p, w, y, train.bucket, buckets, target)
        else:
            chains = {}
            sigma_star = 1.0
            for b in buckets:
                mask = train.bucket == b
                chain, candidates, bpos, bneg = _roc_chain(p[mask], w[mask], y[mask])
                chains[b] = (chain, candidates, mask, bpos, bneg)
                sigma_star = min(sigma_star, _ray_exit(chain, target))
            for b in buckets:
                chain, candidates, mask, bpos, bneg = chains[b]
                exit_sigma = _ray_exit(chain, target)
                exit_point = (exit_sigma * target[0], exit_sigma * target[1])
                reject_prob = 1.0 - (sigma_star / exit_sigma)
                rules[b] = _point_on_chain_rule(
                    chain, candidates, p[mask], w[mask], y[mask], bpos, bneg, exit_point, reject_prob
                )
    return ThresholdScorer(scorer, constraint, rules, seed)


def _axis_aligned_eo_rules(p, w, y, bucket_labels, buckets, target) -> dict:
    """Equalized-odds rules when the overall target sits on an axis.

    With a zero target FPR (TPR), each bucket mixes a reject arm with the
    threshold that clears every negative (positive), so the other rate is
    equalized at the largest commonly achievable value.
    """
    zero_fpr = target[0] == 0.0
    cap = 1.0
    per_bucket = {}
    for b in buckets:
        mask = bucket_labels == b
        hold_out = (y[mask] <= 0.5) if zero_fpr else (y[mask] > 0.5)
        measure = ~hold_out
        t_clear = float(p[mask][hold_out].max()) if hold_out.any() else -1.0
        achievable = _weighted_rate(p[mask][measure], w[mask][measure], t_clear) if measure.any() else 0.0
        per_bucket[b] = (t_clear, achievable, float(max(1.0, p[mask].max() if mask.any() else 1.0)))
        cap = min(cap, achievable)
    common = min(target[1] if zero_fpr else target[0], cap)
    rules = {}
    for b in buckets:
        t_clear, achievable, top = per_bucket[b]
        if common <= 0.0 or achievable <= 0.0:
            rules[b] = _ThresholdRule((top,), (1.0,))
        elif abs(achievable - common) <= 1e-12:
            rules[b] = _ThresholdRule((t_clear,), (1.0,))
        else:
            q = common / achievable
            rules[b] = _ThresholdRule((t_clear, top), (q, 1.0 - q))
    return rules


# ---------------------------------------------------------------------------
# disparity measurement


@dataclass(frozen=True)
class DisparityReport:
    """Per-bucket audit rates and their max pairwise gaps.

    Rates come in unweighted and weighted variants; undefined cells (no
    records, no positives, no negatives) are None and excluded from gaps.
    """

    buckets: tuple
    selection_rate: tuple
    tpr: tuple
    fpr: tuple
    selection_rate_w: tuple
    tpr_w: tuple
    fpr_w: tuple
    constraint: FairnessConstraint | None = None

    def _gap(self, rates) -> float:
        defined = [r for r in rates if r is not None]
        return max(defined) - min(defined) if defined else 0.0

    @property
    def selection_gap(self) -> float:
        return self._gap(self.selection_rate)

    @property
    def tpr_gap(self) -> float:
        return self._gap(self.tpr)

    @property
    def fpr_gap(self) -> float:
        return self._gap(self.fpr)

    @property
    def selection_gap_w(self) -> float:
        return self._gap(self.selection_rate_w)

    @property
    def tpr_gap_w(self) -> float:
        return self._gap(self.tpr_w)

    @property
    def fpr_gap_w(self) -> float:
        return self._gap(self.fpr_w)

    def constraint_gap(self, weighted: bool = False) -> float:
        """Max pairwise gap of the quantity the constraint equalizes."""
        kind = self.constraint.kind if self.constraint else "demographic_parity"
        if kind == "demographic_parity":
            return self.selection_gap_w if weighted else self.selection_gap
        if kind == "equal_tpr":
            return self.tpr_gap_w if weighted else self.tpr_gap
        return max(
            (self.tpr_gap_w, self.fpr_gap_w) if weighted else (self.tpr_gap, self.fpr_gap)
        )

    def save_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bucket", "selection_rate", "tpr", "fpr", "selection_rate_w", "tpr_w", "fpr_w"])
            for i, b in enumerate(self.buckets):
                row = [b]
                for series in (self.selection_rate, self.tpr, self.fpr,
                               self.selection_rate_w, self.tpr_w, self.fpr_w):
                    row.append("NA" if series[i] is None else repr(float(series[i])))
                writer.writerow(row)

    @classmethod
    def load_csv(cls, path) -> "DisparityReport":
        with Path(path).open("r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected = ["bucket", "selection_rate", "tpr", "fpr", "selection_rate_w", "tpr_w", "fpr_w"]
            if header != expected:
                raise ValueError(f"expected header {expected}, got {header}")
            cols: list[list] = [[] for _ in expected]
            for row in reader:
                cols[0].append(int(row[0]))
                for j in range(1, len(expected)):
                    cols[j].append(None if row[j] == "NA" else float(row[j]))
        return cls(*(tuple(c) for c in cols))


def _load_reduced_scorer(doc: dict) -> ReducedScorer:
    from .scoring import scorer_from_dict

    params = doc["params"]
    return ReducedScorer(
        [scorer_from_dict(c) for c in params["components"]],
        params["weights"],
        FairnessConstraint(params["constraint"]["kind"], params["constraint"]["epsilon"]),
        params["realize_seed"],
        params["duality_gap"],
        params["violation"],
        params["converged"],
        params["iterations"],
    )


def _load_threshold_scorer(doc: dict) -> ThresholdScorer:
    from .scoring import scorer_from_dict

    params = doc["params"]
    rules = {
        int(b): _ThresholdRule(tuple(r["thresholds"]), tuple(r["probabilities"]))
        for b, r in params["rules"].items()
    }
    return ThresholdScorer(
        scorer_from_dict(params["base"]),
        FairnessConstraint(params["constraint"]["kind"], params["constraint"]["epsilon"]),
        rules,
        params["seed"],
    )


def _load_constant_scorer(doc: dict) -> _ConstantScorer:
    return _ConstantScorer(doc["params"]["value"], doc["feature_count"])


def _register_loaders() -> None:
    from .scoring import EXTRA_SCORER_LOADERS

    EXTRA_SCORER_LOADERS["fairness_reduction"] = _load_reduced_scorer
    EXTRA_SCORER_LOADERS["fairness_postprocess"] = _load_threshold_scorer
    EXTRA_SCORER_LOADERS["constant"] = _load_constant_scorer


_register_loaders()


def _rate_or_none(a, w, mask) -> tuple[float | None, float | None]:
    if not mask.any():
        return None, None
    unweighted = float(a[mask].mean())
    weighted = float(np.sum(a[mask] * w[mask]) / np.sum(w[mask]))
    return unweighted, weighted


def constraint_disparity(scores_or_alloc, pop: Population, constraint: FairnessConstraint,
                         tau: float = DE_MINIMIS) -> DisparityReport:
    """Per-bucket selection rate, TPR, and FPR for a decision set.

    A ScoreVector is thresholded at 0.5 (the full prediction set); an
    Allocation contributes its fractional intensities directly.
    """
    if not pop.bucketed:
        raise ValueError("population must be bucketed first (assign_buckets)")
    if isinstance(scores_or_alloc, ScoreVector):
        a = (scores_or_alloc.aligned_to(pop) > 0.5).astype(float)
    else:
        a = scores_or_alloc.aligned_to(pop)
    m = misreport_flags(pop.misreport, tau)
    w = pop.weight
    buckets, sel, tpr, fpr, sel_w, tpr_w, fpr_w = [], [], [], [], [], [], []
    for b in range(1, pop.n_buckets + 1):
        mask = pop.bucket == b
        buckets.append(b)
        s_u, s_w = _rate_or_none(a, w, mask)
        t_u, t_w = _rate_or_none(a, w, mask & m)
        f_u, f_w = _rate_or_none(a, w, mask & ~m)
        sel.append(s_u)
        sel_w.append(s_w)
        tpr.append(t_u)
        tpr_w.append(t_w)
        fpr.append(f_u)
        fpr_w.append(f_w)
    return DisparityReport(
        tuple(buckets), tuple(sel), tuple(tpr), tuple(fpr),
        tuple(sel_w), tuple(tpr_w), tuple(fpr_w), constraint,
    )
