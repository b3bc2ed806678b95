import json

import numpy as np
import pytest

from audit_alloc.errors import ConfigurationError, DataError, DegenerateLabelError, DimensionMismatchError
from audit_alloc.population import Population, PopulationConfig, generate_population
from audit_alloc.scoring import (
    ModelSpec,
    Scorer,
    ScoreVector,
    TargetKind,
    fit_on_arrays,
    fit_scorer,
    grid_search_cv,
    logistic_loss_grad,
    oracle_scorer,
    score,
    scorer_from_dict,
)
from audit_alloc.scoring.trees import boost_gradient
from conftest import make_population


def toy_population(X, deltas, weights=None):
    n = len(X)
    return Population(
        ids=np.arange(n),
        features=np.asarray(X, dtype=float),
        reported_income=np.ones(n),
        misreport=np.asarray(deltas, dtype=float),
        cost=np.ones(n),
        weight=np.ones(n) if weights is None else np.asarray(weights, dtype=float),
    )


def separable_population(rng, n=200):
    half = n // 2
    X = np.concatenate([rng.normal(-3.0, 0.5, (half, 2)), rng.normal(3.0, 0.5, (half, 2))])
    deltas = np.concatenate([np.zeros(half), np.full(half, 1000.0)])
    return toy_population(X, deltas)


class TestLogistic:
    def test_separable_training_accuracy(self, rng):
        pop = separable_population(rng)
        scorer = fit_scorer(ModelSpec("logistic"), pop, TargetKind.classification(200.0))
        preds = score(scorer, pop).values > 0.5
        assert np.mean(preds == (pop.misreport > 200.0)) == 1.0

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(10):
            n, d = 30, 4
            X = rng.normal(size=(n, d))
            y = (rng.random(n) < 0.5).astype(float)
            w = rng.uniform(0.5, 2.0, n)
            theta = rng.normal(size=d + 1)
            _, grad = logistic_loss_grad(theta, X, y, w, l2=0.01)
            h = 1e-6
            for j in range(d + 1):
                e = np.zeros(d + 1)
                e[j] = h
                lp, _ = logistic_loss_grad(theta + e, X, y, w, l2=0.01)
                lm, _ = logistic_loss_grad(theta - e, X, y, w, l2=0.01)
                numeric = (lp - lm) / (2 * h)
                assert abs(grad[j] - numeric) <= 1e-5 * max(1.0, abs(numeric))

    def test_weighted_matches_duplicated(self, rng):
        n, d = 60, 3
        X = rng.normal(size=(n, d))
        y = (X[:, 0] + 0.3 * rng.normal(size=n) > 0).astype(float)
        weights = rng.integers(1, 4, n).astype(float)
        spec = ModelSpec("logistic", {"tol": 1e-12})
        weighted = fit_on_arrays(spec, X, y, weights, TargetKind.classification())
        reps = np.repeat(np.arange(n), weights.astype(int))
        duplicated = fit_on_arrays(spec, X[reps], y[reps], np.ones(len(reps)), TargetKind.classification())
        np.testing.assert_allclose(
            np.concatenate([[weighted.intercept], weighted.coef]),
            np.concatenate([[duplicated.intercept], duplicated.coef]),
            atol=1e-6, rtol=1e-6,
        )

    def test_regression_target_rejected(self, rng):
        pop = separable_population(rng)
        with pytest.raises(ConfigurationError):
            fit_scorer(ModelSpec("logistic"), pop, TargetKind.regression())


class TestLDA:
    def test_matches_bayes_rule_on_fresh_sample(self, rng):
        train_x = np.concatenate([rng.normal(-2.0, 1.0, (400, 2)), rng.normal(2.0, 1.0, (400, 2))])
        deltas = np.concatenate([np.zeros(400), np.full(400, 500.0)])
        pop = toy_population(train_x, deltas)
        scorer = fit_scorer(
            ModelSpec("linear_discriminant", fit_mode="native_weights"), pop, TargetKind.classification(200.0)
        )
        fresh = np.concatenate([rng.normal(-2.0, 1.0, (500, 2)), rng.normal(2.0, 1.0, (500, 2))])
        bayes = (fresh.sum(axis=1) > 0).astype(float)  # equal-covariance optimum
        preds = (scorer.score_features(fresh) > 0.5).astype(float)
        assert np.mean(preds == bayes) >= 0.95

    def test_default_fit_mode_is_subsample(self):
        assert ModelSpec("linear_discriminant").resolved_fit_mode() == "subsample"
        assert ModelSpec("gradient_boost").resolved_fit_mode() == "native_weights"

    def test_subsample_fit_runs(self, rng):
        pop = separable_population(rng)
        spec = ModelSpec("linear_discriminant", subsample_size=500)
        scorer = fit_scorer(spec, pop, TargetKind.classification(200.0))
        preds = score(scorer, pop).values
        assert np.all((preds >= 0) & (preds <= 1))


class TestGradientBoost:
    def test_regression_loss_monotone_and_small(self, rng):
        x = rng.uniform(-1, 1, 100)
        X = x[:, None]
        y = 3.0 * x
        pop = toy_population(X, y)
        spec = ModelSpec("gradient_boost", {"n_estimators": 50, "max_depth": 2, "learning_rate": 0.3, "min_samples_leaf": 1})
        scorer = fit_scorer(spec, pop, TargetKind.regression())
        losses = scorer.training_loss
        assert len(losses) == 50
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
        assert losses[-1] < np.var(y) / 100

    def test_boost_gradient_matches_finite_differences(self, rng):
        n = 40
        raw = rng.normal(size=n)
        y = (rng.random(n) < 0.5).astype(float)
        w = rng.uniform(0.5, 2.0, n)
        grad = boost_gradient(raw, y, classification=True) * w / w.sum()

        def loss(r):
            return float(np.sum(w * (np.logaddexp(0.0, r) - y * r)) / w.sum())

        h = 1e-6
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            numeric = (loss(raw + e) - loss(raw - e)) / (2 * h)
            assert abs(grad[j] - numeric) <= 1e-5 * max(1.0, abs(numeric))

    def test_classification_scores_in_unit_interval(self, rng):
        pop = separable_population(rng)
        spec = ModelSpec("gradient_boost", {"n_estimators": 10})
        scorer = fit_scorer(spec, pop, TargetKind.classification(200.0))
        values = score(scorer, pop).values
        assert values.min() >= 0.0 and values.max() <= 1.0


class TestRandomForest:
    def test_classification_scores_in_unit_interval(self, rng):
        pop = separable_population(rng)
        spec = ModelSpec("random_forest", {"n_estimators": 12, "max_depth": 4})
        scorer = fit_scorer(spec, pop, TargetKind.classification(200.0))
        values = score(scorer, pop).values
        assert values.min() >= 0.0 and values.max() <= 1.0

    def test_scoring_deterministic(self, rng):
        pop = separable_population(rng)
        spec = ModelSpec("random_forest", {"n_estimators": 8}, seed=3)
        scorer = fit_scorer(spec, pop, TargetKind.classification(200.0))
        a = score(scorer, pop).values
        b = score(scorer, pop).values
        np.testing.assert_array_equal(a, b)

    def test_same_seed_same_model(self, rng):
        pop = separable_population(rng)
        spec = ModelSpec("random_forest", {"n_estimators": 8}, seed=3)
        a = score(fit_scorer(spec, pop, TargetKind.classification(200.0)), pop).values
        b = score(fit_scorer(spec, pop, TargetKind.classification(200.0)), pop).values
        np.testing.assert_array_equal(a, b)


class TestTreeRankingInvariance:
    @pytest.mark.parametrize("family", ["random_forest", "gradient_boost"])
    def test_positive_feature_scaling_preserves_ranking(self, family, rng):
        n = 150
        X = rng.normal(size=(n, 3))
        y = X[:, 0] * 2 + np.sin(X[:, 1]) + 0.1 * rng.normal(size=n)
        pop = toy_population(X, y)
        scaled = toy_population(X * np.array([3.7, 0.01, 250.0]), y)
        spec = ModelSpec(family, {"n_estimators": 10, "max_depth": 4}, seed=5)
        base = score(fit_scorer(spec, pop, TargetKind.regression()), pop).values
        other = score(fit_scorer(spec, scaled, TargetKind.regression()), scaled).values
        np.testing.assert_array_equal(np.argsort(base, kind="stable"), np.argsort(other, kind="stable"))


class TestScoreContract:
    def test_constant_stub_scores_equal(self):
        class ConstantScorer(Scorer):
            family = "constant"

            def score_features(self, X):
                return np.full(len(X), 0.42)

        pop = make_population([1, 2, 3], [0, 0, 0])
        stub = ConstantScorer(TargetKind.classification(), pop.feature_dim)
        values = score(stub, pop).values
        assert np.all(values == 0.42)

    def test_dimension_mismatch(self, rng):
        pop = separable_population(rng)
        scorer = fit_scorer(ModelSpec("logistic"), pop, TargetKind.classification(200.0))
        wrong = make_population([1, 2], [0, 0], features=np.zeros((2, 5)))
        with pytest.raises(DimensionMismatchError):
            score(scorer, wrong)

    def test_single_class_rejected(self):
        pop = make_population([1, 2, 3], [0, 0, 0], features=np.eye(3))
        with pytest.raises(DegenerateLabelError):
            fit_scorer(ModelSpec("logistic"), pop, TargetKind.classification(200.0))

    def test_non_finite_feature_rejected(self):
        features = np.array([[1.0], [np.nan], [2.0]])
        pop = make_population([1, 2, 3], [0, 300, 0], features=features)
        with pytest.raises(DataError):
            fit_scorer(ModelSpec("logistic"), pop, TargetKind.classification(200.0))


class TestOracle:
    def test_identity(self):
        pop = make_population([1, 2, 3], [5.0, -2.0, 0.0])
        sv = oracle_scorer(pop)
        np.testing.assert_array_equal(sv.values, [5.0, -2.0, 0.0])

    def test_ranks_by_misreport(self, rng):
        deltas = rng.normal(size=50) * 100
        pop = make_population(np.arange(50), deltas)
        sv = oracle_scorer(pop)
        np.testing.assert_array_equal(np.argsort(-sv.values), np.argsort(-deltas))


class TestSerialization:
    @pytest.mark.parametrize("family,params", [
        ("logistic", {}),
        ("linear_discriminant", {}),
        ("random_forest", {"n_estimators": 5, "max_depth": 3}),
        ("gradient_boost", {"n_estimators": 5}),
    ])
    def test_round_trip(self, family, params, rng):
        pop = separable_population(rng)
        spec = ModelSpec(family, params, seed=1, fit_mode="native_weights")
        scorer = fit_scorer(spec, pop, TargetKind.classification(200.0))
        doc = json.loads(json.dumps(scorer.to_dict()))
        back = scorer_from_dict(doc)
        np.testing.assert_allclose(score(back, pop).values, score(scorer, pop).values)

    def test_score_vector_csv_round_trip(self, tmp_path, rng):
        sv = ScoreVector(np.arange(10), rng.normal(size=10))
        path = tmp_path / "scores.csv"
        sv.save_csv(path)
        back = ScoreVector.load_csv(path)
        np.testing.assert_array_equal(back.ids, sv.ids)
        np.testing.assert_array_equal(back.values, sv.values)


class TestGridSearch:
    def test_picks_better_depth(self):
        pop = generate_population(PopulationConfig(n_records=2000, seed=21))
        best, table = grid_search_cv(
            "gradient_boost", {"n_estimators": [10], "max_depth": [1, 3]},
            pop, TargetKind.classification(200.0), k=3, seed=2,
        )
        assert len(table) == 2
        assert best.hyperparameters["max_depth"] in (1, 3)
        losses = {p["max_depth"]: loss for p, loss in table}
        assert best.hyperparameters["max_depth"] == min(losses, key=losses.get)
