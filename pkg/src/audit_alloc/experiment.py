"""Config-driven experiment runner.

One experiment = one population source, one model (optionally wrapped in a
fairness intervention), one budget regime. Artifacts land in the output
directory: metrics and per-bucket rate tables, disparity reports, the
allocation itself, rendered figures, and a manifest keyed by the config
hash. Identical config and seed produce byte-identical CSVs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .allocation import (
    Allocation,
    DollarBudget,
    RateBudget,
    build_cost_model,
    estimate_costs,
    monotone_allocation,
    oracle_allocation,
    roi_allocation,
    topk_allocation,
)
from .errors import ConfigurationError
from .fairness import FairnessConstraint, constraint_disparity, fit_reduction, postprocess_thresholds
from .metrics import MetricsReport, compute_metrics
from .plots import render_disparity, render_rate_curves
from .population import (
    Population,
    PopulationConfig,
    assign_buckets,
    generate_population,
    load_population,
    split,
    winsorize_misreports,
)
from .reporting import write_manifest, write_metrics_csv, write_rates_csv
from .scoring import ModelSpec, ScoreVector, TargetKind, fit_scorer, score
from .stats import derive_seed

FAIRNESS_METHODS = ("reduction", "postprocess", "monotone_lp")


def population_config_from_dict(d: dict) -> PopulationConfig:
    d = dict(d)
    for key in ("misreport_rate", "mean_adjustment", "mean_cost"):
        if key in d:
            d[key] = tuple(d[key])
    try:
        return PopulationConfig(**d)
    except TypeError as e:
        raise ConfigurationError(f"bad population config: {e}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see README for the JSON schema."""

    population: dict
    model: dict
    budget: dict
    fairness: dict | None = None
    tau: float = 200.0
    n_buckets: int = 10
    test_fraction: float = 0.25
    winsorize: tuple[float, float] | None = (0.01, 0.99)
    cost_source: str = "table"
    seed: int = 0

    def __post_init__(self):
        if sorted(self.population) not in (["generate"], ["load"]):
            raise ConfigurationError("population must have exactly one of 'generate' or 'load'")
        if "generate" in self.population:
            population_config_from_dict(self.population["generate"])
        budget_keys = sorted(self.budget)
        if budget_keys not in (["rate"], ["dollars"]):
            raise ConfigurationError("budget must have exactly one of 'rate' or 'dollars'")
        if self.tau < 0:
            raise ConfigurationError("tau must be nonnegative")
        if not (0 < self.test_fraction < 1):
            raise ConfigurationError("test_fraction must lie in (0, 1)")
        if self.n_buckets < 2:
            raise ConfigurationError("n_buckets must be at least 2")
        if self.cost_source not in ("table", "record"):
            raise ConfigurationError("cost_source must be 'table' or 'record'")
        target = self.model.get("target", "classification")
        if target not in ("classification", "regression"):
            raise ConfigurationError("model.target must be 'classification' or 'regression'")
        if not self.is_oracle_model:
            self._model_spec()  # validates family and hyperparameters
        if self.fairness is not None:
            method = self.fairness.get("method")
            if method not in FAIRNESS_METHODS:
                raise ConfigurationError(f"fairness.method must be one of {FAIRNESS_METHODS}")
            if method == "monotone_lp":
                if "rate" not in self.budget:
                    raise ConfigurationError("monotone_lp requires a rate budget")
            else:
                if self.is_oracle_model:
                    raise ConfigurationError("fairness interventions do not apply to the oracle model")
                FairnessConstraint(self.fairness.get("constraint", ""), self.fairness.get("epsilon", 0.01))
                if target != "classification":
                    raise ConfigurationError(f"fairness method {method!r} requires a classification target")

    @property
    def is_oracle_model(self) -> bool:
        return self.model.get("family") == "oracle"

    def _model_spec(self) -> ModelSpec:
        return ModelSpec(
            family=self.model.get("family", "gradient_boost"),
            hyperparameters=self.model.get("hyperparameters", {}),
            seed=derive_seed(self.seed, "model"),
            fit_mode=self.model.get("fit_mode"),
            subsample_size=self.model.get("subsample_size", 1_000_000),
        )

    @property
    def label(self) -> str:
        if self.is_oracle_model:
            return self.model.get("label", "oracle-scores")
        default = f"{self.model.get('family', 'gradient_boost')}-{self.model.get('target', 'classification')}"
        return self.model.get("label", default)

    def budget_spec(self) -> RateBudget | DollarBudget:
        if "rate" in self.budget:
            return RateBudget(self.budget["rate"])
        return DollarBudget(self.budget["dollars"])

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "model": self.model,
            "budget": self.budget,
            "fairness": self.fairness,
            "tau": self.tau,
            "n_buckets": self.n_buckets,
            "test_fraction": self.test_fraction,
            "winsorize": list(self.winsorize) if self.winsorize else None,
            "cost_source": self.cost_source,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "winsorize" in d and d["winsorize"] is not None:
            d["winsorize"] = tuple(d["winsorize"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        if "population" not in d or "model" not in d or "budget" not in d:
            raise ConfigurationError("config requires population, model, and budget sections")
        return cls(**d)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    out_dir: Path
    model_report: MetricsReport
    oracle_report: MetricsReport
    scores: ScoreVector
    allocation: Allocation
    oracle: Allocation
    test: Population
    warnings: list


def _load_populations(config: ExperimentConfig) -> tuple[Population, Population]:
    if "generate" in config.population:
        pop = generate_population(population_config_from_dict(config.population["generate"]))
    else:
        pop = load_population(config.population["load"])
    pop = assign_buckets(pop, config.n_buckets)
    train, test = split(pop, config.test_fraction, derive_seed(config.seed, "split"))
    if config.winsorize is not None:
        train = winsorize_misreports(train, *config.winsorize)
    return train, test


def _fit_pipeline(config: ExperimentConfig, train: Population, warnings: list):
    target = (
        TargetKind.classification(config.tau)
        if config.model.get("target", "classification") == "classification"
        else TargetKind.regression()
    )
    spec = config._model_spec()
    method = (config.fairness or {}).get("method")
    if method == "reduction":
        scorer = fit_reduction(
            spec,
            train,
            FairnessConstraint(config.fairness["constraint"], config.fairness.get("epsilon", 0.01)),
            max_iters=config.fairness.get("max_iters", 30),
            seed=derive_seed(config.seed, "reduction"),
            tau=config.tau,
        )
        if not scorer.converged:
            warnings.append(
                f"fairness reduction did not converge: duality gap {scorer.duality_gap:.6f}"
            )
    elif method == "postprocess":
        base = fit_scorer(spec, train, target)
        scorer = postprocess_thresholds(
            base,
            train,
            FairnessConstraint(config.fairness["constraint"], config.fairness.get("epsilon", 0.01)),
            seed=derive_seed(config.seed, "postprocess"),
        )
    else:
        scorer = fit_scorer(spec, train, target)
    return scorer, target


def _allocate(config: ExperimentConfig, scores: ScoreVector, test: Population,
              train: Population) -> tuple[Allocation, Allocation, Population]:
    budget = config.budget_spec()
    if isinstance(budget, DollarBudget):
        if config.cost_source == "table":
            model = build_cost_model(train)
            test = replace(test, cost=estimate_costs(test, model))
        alloc = roi_allocation(scores, test, budget)
        from .scoring import oracle_scorer

        oracle = roi_allocation(oracle_scorer(test), test, budget)
        return alloc, oracle, test
    if (config.fairness or {}).get("method") == "monotone_lp":
        alloc = monotone_allocation(scores, test, budget)
    else:
        alloc = topk_allocation(scores, test, budget)
    return alloc, oracle_allocation(test, budget), test


def run_experiment(config: ExperimentConfig, out_dir) -> ExperimentResult:
    """Run the full pipeline and write the artifact set into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []

    train, test = _load_populations(config)
    if config.is_oracle_model:
        from .scoring import oracle_scorer

        scores = oracle_scorer(test)
        target = TargetKind.regression()
    else:
        scorer, target = _fit_pipeline(config, train, warnings)
        scores = score(scorer, test)
    alloc, oracle, test = _allocate(config, scores, test, train)

    k = config.budget["rate"] if "rate" in config.budget else None
    model_report = compute_metrics(config.label, alloc, test, oracle if k else None, tau=config.tau)
    oracle_report = compute_metrics("oracle", oracle, test, oracle if k else None, tau=config.tau)

    outputs = []

    def emit(name: str, writer) -> Path:
        path = out / name
        writer(path)
        outputs.append(name)
        return path

    emit("metrics.csv", lambda p: write_metrics_csv(p, [model_report, oracle_report]))
    emit("audit_rate_by_bucket.csv", lambda p: write_rates_csv(
        p, model_report.audit_rate_by_bucket, oracle_report.audit_rate_by_bucket))
    emit("allocation.csv", alloc.save_csv)
    emit("allocation__oracle.csv", oracle.save_csv)
    emit("scores.csv", scores.save_csv)
    disparity = constraint_disparity(alloc, test, _disparity_constraint(config), tau=config.tau)
    emit("disparity.csv", disparity.save_csv)
    if target.is_classification:
        full = constraint_disparity(scores, test, _disparity_constraint(config), tau=config.tau)
        emit("disparity_predictions.csv", full.save_csv)
    emit("audit_rate_by_bucket.png", lambda p: render_rate_curves(
        p, model_report.audit_rate_by_bucket, oracle_report.audit_rate_by_bucket, config.label))
    emit("disparity.png", lambda p: render_disparity(p, disparity))
    emit("manifest.json", lambda p: write_manifest(p, config.to_dict(), config.seed, outputs + ["manifest.json"], warnings))

    return ExperimentResult(
        config=config, out_dir=out, model_report=model_report, oracle_report=oracle_report,
        scores=scores, allocation=alloc, oracle=oracle, test=test, warnings=warnings,
    )


def _disparity_constraint(config: ExperimentConfig) -> FairnessConstraint:
    fairness = config.fairness or {}
    if fairness.get("method") in ("reduction", "postprocess"):
        return FairnessConstraint(fairness["constraint"], fairness.get("epsilon", 0.01))
    return FairnessConstraint.demographic_parity()
