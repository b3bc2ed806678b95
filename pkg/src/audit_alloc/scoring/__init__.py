"""Fit predictive scorers on weighted training data and score populations."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, DataError, DegenerateLabelError
from ..population import Population, weighted_subsample
from ..stats import derive_seed
from .base import (
    FAMILIES,
    FORMAT_VERSION,
    ModelSpec,
    Scorer,
    ScoreVector,
    TargetKind,
    check_dimensions,
    validate_features,
)
from .linear import LinearScorer, fit_lda, fit_logistic, logistic_loss_grad
from .trees import TreeEnsembleScorer, boost_gradient, fit_gradient_boost, fit_random_forest

__all__ = [
    "FAMILIES",
    "ModelSpec",
    "Scorer",
    "ScoreVector",
    "TargetKind",
    "fit_scorer",
    "fit_on_arrays",
    "score",
    "oracle_scorer",
    "load_scorer",
    "scorer_from_dict",
    "logistic_loss_grad",
    "boost_gradient",
    "grid_search_cv",
]


def fit_on_arrays(spec: ModelSpec, X, y, w, target: TargetKind) -> Scorer:
    """Fit the spec's family directly on (features, labels, weights)."""
    X = validate_features(X)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if len(X) == 0:
        raise DataError("empty training set")
    if target.is_classification and (y.min() > 0.5 or y.max() <= 0.5):
        raise DegenerateLabelError("classification training set has a single class")
    hp = spec.resolved_hyperparameters()
    if spec.family == "logistic":
        if not target.is_classification:
            raise ConfigurationError("logistic supports classification targets only")
        theta = fit_logistic(X, y, w, l2=hp["l2"], max_iter=hp["max_iter"], tol=hp["tol"])
        return LinearScorer("logistic", target, theta[0], theta[1:])
    if spec.family == "linear_discriminant":
        if not target.is_classification:
            raise ConfigurationError("linear_discriminant supports classification targets only")
        return fit_lda(X, y, w, shrinkage=hp["shrinkage"], target_kind=target)
    if spec.family == "random_forest":
        return fit_random_forest(
            X, y, w, target, spec.seed,
            n_estimators=hp["n_estimators"],
            max_depth=hp["max_depth"],
            min_samples_leaf=hp["min_samples_leaf"],
            max_features=hp["max_features"],
        )
    return fit_gradient_boost(
        X, y, w, target, spec.seed,
        n_estimators=hp["n_estimators"],
        learning_rate=hp["learning_rate"],
        max_depth=hp["max_depth"],
        min_samples_leaf=hp["min_samples_leaf"],
        bagging_fraction=hp["bagging_fraction"],
    )


def fit_scorer(spec: ModelSpec, train: Population, target: TargetKind) -> Scorer:
    """Fit per the spec's fit mode.

    "native_weights" feeds sampling weights into the loss; "subsample" first
    draws an unweighted weight-proportional resample (the protocol used for
    linear discriminants, whose textbook estimator has no weight support).
    """
    if len(train) == 0:
        raise DataError("empty training population")
    if target.is_classification:
        labels = target.labels(train)
        if labels.min() > 0.5 or labels.max() <= 0.5:
            raise DegenerateLabelError("classification training set has a single class")
    if spec.resolved_fit_mode() == "subsample":
        train = weighted_subsample(train, spec.subsample_size, derive_seed(spec.seed, "subsample"))
    return fit_on_arrays(spec, train.features, target.labels(train), train.weight, target)


def score(scorer: Scorer, pop: Population) -> ScoreVector:
    """Score every record; classification scores are checked to lie in [0, 1]."""
    check_dimensions(scorer, pop)
    X = validate_features(pop.features)
    if hasattr(scorer, "score_population"):
        values = np.asarray(scorer.score_population(pop), dtype=float)
    else:
        values = np.asarray(scorer.score_features(X), dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataError("scorer produced non-finite scores")
    if scorer.target_kind.is_classification and (values.min() < -1e-12 or values.max() > 1 + 1e-12):
        raise DataError("classification scores fell outside [0, 1]")
    return ScoreVector(pop.ids.copy(), values)


def oracle_scorer(pop: Population) -> ScoreVector:
    """Scores equal to the true misreport amounts."""
    return ScoreVector(pop.ids.copy(), pop.misreport.copy())


EXTRA_SCORER_LOADERS: dict = {}


def scorer_from_dict(doc: dict) -> Scorer:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported scorer format version {doc.get('format_version')!r}")
    target = TargetKind.from_dict(doc["target"])
    family = doc["family"]
    params = doc["params"]
    if family in ("logistic", "linear_discriminant"):
        return LinearScorer._from_params(family, target, params)
    if family in ("random_forest", "gradient_boost"):
        return TreeEnsembleScorer._from_params(family, target, doc["feature_count"], params)
    if family in EXTRA_SCORER_LOADERS:
        return EXTRA_SCORER_LOADERS[family](doc)
    raise ConfigurationError(f"unknown scorer family {family!r}")


def load_scorer(path) -> Scorer:
    return scorer_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def grid_search_cv(family: str, param_grid: dict, train: Population, target: TargetKind,
                   k: int = 5, seed: int = 0) -> tuple[ModelSpec, list]:
    """Pick hyperparameters from a small fixed grid by k-fold CV.

    Scoring is weighted log loss for classification and weighted squared
    error for regression; ties keep the earliest grid point. Returns the
    winning spec and the (params, mean loss) table.
    """
    keys = sorted(param_grid)
    combos: list[dict] = [{}]
    for key in keys:
        combos = [dict(c, **{key: v}) for c in combos for v in param_grid[key]]
    n = len(train)
    folds = np.random.default_rng(derive_seed(seed, "cv")).permutation(n) % k
    y_all = target.labels(train)
    table = []
    for params in combos:
        spec = ModelSpec(family, params, seed=seed)
        losses = []
        for fold in range(k):
            hold = np.flatnonzero(folds == fold)
            keep = np.flatnonzero(folds != fold)
            if len(hold) == 0 or len(keep) == 0:
                continue
            sub = train.take(keep)
            try:
                scorer = fit_scorer(spec, sub, target)
            except DegenerateLabelError:
                continue
            preds = scorer.score_features(train.features[hold])
            w = train.weight[hold]
            y = y_all[hold]
            if target.is_classification:
                p = np.clip(preds, 1e-12, 1 - 1e-12)
                loss = float(np.sum(w * -(y * np.log(p) + (1 - y) * np.log(1 - p))) / w.sum())
            else:
                loss = float(np.sum(w * (y - preds) ** 2) / w.sum())
            losses.append(loss)
        mean_loss = float(np.mean(losses)) if losses else np.inf
        table.append((params, mean_loss))
    best_params = min(table, key=lambda t: t[1])[0]
    return ModelSpec(family, best_params, seed=seed), table
