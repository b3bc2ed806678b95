"""Model specs, fitted scorers, and score vectors."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, DataError, DimensionMismatchError
from ..population import DE_MINIMIS, Population

FAMILIES = ("linear_discriminant", "logistic", "random_forest", "gradient_boost")

FORMAT_VERSION = 1

_DEFAULT_HYPERPARAMETERS = {
    "logistic": {"l2": 1e-4, "max_iter": 100, "tol": 1e-9},
    "linear_discriminant": {"shrinkage": 1e-8},
    "random_forest": {
        "n_estimators": 100,
        "max_depth": 12,
        "min_samples_leaf": 5,
        "max_features": "sqrt",
    },
    "gradient_boost": {
        "n_estimators": 100,
        "learning_rate": 0.1,
        "max_depth": 3,
        "min_samples_leaf": 10,
        "bagging_fraction": 1.0,
    },
}


@dataclass(frozen=True)
class TargetKind:
    """What the model predicts: a significant-misreport flag or the amount."""

    kind: str
    tau: float = DE_MINIMIS

    @classmethod
    def classification(cls, tau: float = DE_MINIMIS) -> "TargetKind":
        return cls("classification", tau)

    @classmethod
    def regression(cls) -> "TargetKind":
        return cls("regression", 0.0)

    @property
    def is_classification(self) -> bool:
        return self.kind == "classification"

    def labels(self, pop: Population) -> np.ndarray:
        if self.is_classification:
            return (pop.misreport > self.tau).astype(float)
        return pop.misreport.astype(float)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tau": self.tau}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetKind":
        return cls(d["kind"], d.get("tau", DE_MINIMIS))


@dataclass(frozen=True)
class ModelSpec:
    """A model family plus validated hyperparameters, seed, and fit mode.

    ``fit_mode`` is "native_weights" (sampling weights enter the loss) or
    "subsample" (fit unweighted on a weight-proportional resample of
    ``subsample_size`` draws). Left as None it defaults to "subsample" for
    linear discriminants and "native_weights" otherwise.
    """

    family: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0
    fit_mode: str | None = None
    subsample_size: int = 1_000_000

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown model family {self.family!r}; choose from {FAMILIES}")
        allowed = _DEFAULT_HYPERPARAMETERS[self.family]
        unknown = set(self.hyperparameters) - set(allowed)
        if unknown:
            raise ConfigurationError(f"{self.family}: unknown hyperparameters {sorted(unknown)}")
        if self.fit_mode not in (None, "native_weights", "subsample"):
            raise ConfigurationError(f"fit_mode must be 'native_weights' or 'subsample', got {self.fit_mode!r}")
        if self.subsample_size < 1:
            raise ConfigurationError("subsample_size must be positive")

    def resolved_hyperparameters(self) -> dict:
        merged = dict(_DEFAULT_HYPERPARAMETERS[self.family])
        merged.update(self.hyperparameters)
        return merged

    def resolved_fit_mode(self) -> str:
        if self.fit_mode is not None:
            return self.fit_mode
        return "subsample" if self.family == "linear_discriminant" else "native_weights"


class Scorer:
    """A fitted model mapping feature vectors to scores.

    Classification scorers emit probabilities in [0, 1]; regression scorers
    emit predicted misreport dollars. Scoring is deterministic.
    """

    family: str = "base"

    def __init__(self, target_kind: TargetKind, feature_count: int):
        self.target_kind = target_kind
        self.feature_count = feature_count

    def score_features(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _params_dict(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "family": self.family,
            "target": self.target_kind.to_dict(),
            "feature_count": self.feature_count,
            "params": self._params_dict(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")


@dataclass(frozen=True)
class ScoreVector:
    """Per-record scores aligned with a population (one finite score per id)."""

    ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64)
        values = np.array(self.values, dtype=np.float64)
        if ids.shape != values.shape or ids.ndim != 1:
            raise ValueError("ids and values must be aligned 1-d arrays")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("score ids must be unique")
        if not np.all(np.isfinite(values)):
            raise DataError("scores must be finite")
        for name, arr in (("ids", ids), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.ids)

    def aligned_to(self, pop: Population) -> np.ndarray:
        """Score values reordered to match the population's record order."""
        if len(self) != len(pop):
            raise ValueError("score vector and population differ in size")
        if np.array_equal(self.ids, pop.ids):
            return self.values
        pos = {int(i): j for j, i in enumerate(self.ids)}
        try:
            idx = np.array([pos[int(i)] for i in pop.ids], dtype=np.int64)
        except KeyError as e:
            raise ValueError(f"population id {e} missing from score vector") from None
        return self.values[idx]

    def save_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "score"])
            for i, v in zip(self.ids, self.values):
                writer.writerow([int(i), repr(float(v))])

    @classmethod
    def load_csv(cls, path) -> "ScoreVector":
        with Path(path).open("r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["id", "score"]:
                raise ValueError(f"expected header id,score, got {header}")
            ids, values = [], []
            for row in reader:
                ids.append(int(row[0]))
                values.append(float(row[1]))
        return cls(np.array(ids, dtype=np.int64), np.array(values))


def validate_features(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains non-finite values")
    return X


def check_dimensions(scorer: Scorer, pop: Population) -> None:
    if pop.feature_dim != scorer.feature_count:
        raise DimensionMismatchError(
            f"scorer expects {scorer.feature_count} features, population has {pop.feature_dim}"
        )
