"""Weighted taxpayer populations: synthesis, CSV ingest, bucketing, transforms.

A population is an ordered, weighted collection of filer records. Each record
carries a feature vector, reported income, the signed gap between true and
reported liability (``misreport``), an audit cost, and a sampling weight (the
number of people the record represents). Income buckets are always recomputed
from reported income, never persisted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, CsvParseError, PopulationSizeError
from .stats import weighted_quantile

GEN_DECILES = 10
DE_MINIMIS = 200.0  # default significant-misreport threshold, dollars

__all__ = [
    "TaxpayerRecord",
    "Population",
    "PopulationConfig",
    "generate_population",
    "load_population",
    "save_population",
    "assign_buckets",
    "misreport_flag",
    "winsorize_misreports",
    "split",
    "weighted_subsample",
    "DE_MINIMIS",
]


@dataclass(frozen=True)
class TaxpayerRecord:
    """One filer. ``misreport`` may be negative (overstated liability)."""

    id: int
    features: tuple[float, ...]
    reported_income: float
    misreport: float
    cost: float
    weight: float
    bucket: int | None = None


@dataclass(frozen=True)
class Population:
    """Columnar, immutable collection of taxpayer records.

    Arrays are aligned by position; ``ids`` are unique and stable under
    splitting. ``bucket`` is 1-based (bucket 1 = lowest income) or None
    until `assign_buckets` has run.
    """

    ids: np.ndarray
    features: np.ndarray
    reported_income: np.ndarray
    misreport: np.ndarray
    cost: np.ndarray
    weight: np.ndarray
    bucket: np.ndarray | None = None
    n_buckets: int = GEN_DECILES
    total_weight: float = field(init=False, default=0.0)

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64)
        feats = np.array(self.features, dtype=np.float64)
        if feats.ndim != 2:
            feats = feats.reshape(len(ids), -1 if feats.size else 0)
        arrays = {
            "ids": ids,
            "features": feats,
            "reported_income": np.array(self.reported_income, dtype=np.float64),
            "misreport": np.array(self.misreport, dtype=np.float64),
            "cost": np.array(self.cost, dtype=np.float64),
            "weight": np.array(self.weight, dtype=np.float64),
        }
        if self.bucket is not None:
            arrays["bucket"] = np.array(self.bucket, dtype=np.int64)
        n = len(ids)
        for name, arr in arrays.items():
            if name != "features" and len(arr) != n:
                raise ValueError(f"{name} must have length {n}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(np.unique(ids)) != n:
            raise ValueError("record ids must be unique")
        if np.any(arrays["weight"] <= 0):
            raise ValueError("weights must be positive")
        if np.any(arrays["cost"] <= 0):
            raise ValueError("costs must be positive")
        if np.any(arrays["reported_income"] < 0):
            raise ValueError("reported_income must be nonnegative")
        object.__setattr__(self, "total_weight", float(np.sum(arrays["weight"])))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def bucketed(self) -> bool:
        return self.bucket is not None

    def record(self, i: int) -> TaxpayerRecord:
        return TaxpayerRecord(
            id=int(self.ids[i]),
            features=tuple(float(x) for x in self.features[i]),
            reported_income=float(self.reported_income[i]),
            misreport=float(self.misreport[i]),
            cost=float(self.cost[i]),
            weight=float(self.weight[i]),
            bucket=int(self.bucket[i]) if self.bucket is not None else None,
        )

    def records(self) -> list[TaxpayerRecord]:
        return [self.record(i) for i in range(len(self))]

    def take(self, indices) -> "Population":
        """New population made of the rows at `indices`, in that order."""
        idx = np.asarray(indices, dtype=np.int64)
        return Population(
            ids=self.ids[idx],
            features=self.features[idx],
            reported_income=self.reported_income[idx],
            misreport=self.misreport[idx],
            cost=self.cost[idx],
            weight=self.weight[idx],
            bucket=None if self.bucket is None else self.bucket[idx],
            n_buckets=self.n_buckets,
        )

    @classmethod
    def from_records(cls, records, n_buckets: int = GEN_DECILES) -> "Population":
        records = list(records)
        bucket = None
        if records and all(r.bucket is not None for r in records):
            bucket = np.array([r.bucket for r in records], dtype=np.int64)
        dim = len(records[0].features) if records else 0
        return cls(
            ids=np.array([r.id for r in records], dtype=np.int64),
            features=np.array([r.features for r in records], dtype=np.float64).reshape(len(records), dim),
            reported_income=np.array([r.reported_income for r in records]),
            misreport=np.array([r.misreport for r in records]),
            cost=np.array([r.cost for r in records]),
            weight=np.array([r.weight for r in records]),
            bucket=bucket,
            n_buckets=n_buckets,
        )


def _default_mean_costs(base: float = 60.0, ratio: float = 41.0) -> tuple[float, ...]:
    """Geometric per-decile mean audit costs with the given top/bottom ratio."""
    step = ratio ** (1.0 / (GEN_DECILES - 1))
    return tuple(base * step**d for d in range(GEN_DECILES))


@dataclass(frozen=True)
class PopulationConfig:
    """Knobs for the synthetic population generator.

    Per-decile vectors have length 10 and are indexed by income decile
    (decile 1 first). The significant-misreport rate must be nondecreasing
    and the mean positive adjustment must peak in the top decile; audit
    costs rise with income with a configurable top/bottom ratio.
    """

    n_records: int = 50_000
    seed: int = 0
    misreport_rate: tuple[float, ...] = (0.30, 0.33, 0.36, 0.40, 0.44, 0.48, 0.52, 0.56, 0.60, 0.65)
    mean_adjustment: tuple[float, ...] = (900.0, 1200.0, 1600.0, 2100.0, 2800.0, 3700.0, 5000.0, 7500.0, 13000.0, 42000.0)
    mean_cost: tuple[float, ...] = field(default_factory=_default_mean_costs)
    # income model: reported income is lognormal(log_mean, log_sigma)
    income_log_mean: float = 10.0
    income_log_sigma: float = 1.1
    # sampling weights are lognormal(0, weight_log_sigma)
    weight_log_sigma: float = 0.25
    # positive adjustments: DE_MINIMIS + gamma(shape) scaled to the decile mean
    adjustment_shape: float = 1.2
    # sub-threshold adjustments for non-misreporters, scaled by the decile rate
    subthreshold_frac: float = 0.5
    subthreshold_spread: float = 300.0
    # cost noise: multiplicative lognormal with unit mean
    cost_log_sigma: float = 0.3
    # feature model: noisy views of (income, misreport) plus nuisance columns
    feature_dim: int = 8
    signal_noise: float = 1.0
    noise_income_factor: float = 8.0  # signal noise scale multiplier, decile 1 -> 10
    income_feature_noise: float = 0.15

    def validate(self) -> None:
        vectors = {
            "misreport_rate": self.misreport_rate,
            "mean_adjustment": self.mean_adjustment,
            "mean_cost": self.mean_cost,
        }
        for name, vec in vectors.items():
            if len(vec) != GEN_DECILES:
                raise ConfigurationError(f"{name} must have {GEN_DECILES} entries, got {len(vec)}")
        rate = self.misreport_rate
        if any(r < 0 or r > 1 for r in rate):
            raise ConfigurationError("misreport_rate entries must lie in [0, 1]")
        if any(b < a for a, b in zip(rate, rate[1:])):
            raise ConfigurationError("misreport_rate must be nondecreasing across deciles")
        adj = self.mean_adjustment
        if any(a <= DE_MINIMIS for a in adj):
            raise ConfigurationError(f"mean_adjustment entries must exceed the ${DE_MINIMIS:.0f} de minimis level")
        if max(adj) != adj[-1]:
            raise ConfigurationError("mean_adjustment must attain its maximum in the top decile")
        cost = self.mean_cost
        if any(c <= 0 for c in cost):
            raise ConfigurationError("mean_cost entries must be positive")
        if any(b < a for a, b in zip(cost, cost[1:])):
            raise ConfigurationError("mean_cost must be nondecreasing across deciles")
        if self.feature_dim < 4:
            raise ConfigurationError("feature_dim must be at least 4 (three signal columns plus income)")
        if self.n_records < 1:
            raise ConfigurationError("n_records must be positive")

    @property
    def cost_ratio(self) -> float:
        return self.mean_cost[-1] / self.mean_cost[0]


def misreport_flag(delta: float, tau: float) -> bool:
    """Significant-misreport indicator: strictly ``delta > tau``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return bool(delta > tau)


def misreport_flags(misreport, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return np.asarray(misreport, dtype=float) > tau


def _bucket_indices(income, weight, ids, n_buckets: int) -> np.ndarray:
    """1-based weighted-quantile bucket per record.

    Records are laid along the cumulative weight axis in (income, id) order;
    bucket boundaries sit at multiples of W/B. A record whose cumulative end
    lands exactly on a boundary stays in the lower bucket.
    """
    order = np.lexsort((ids, income))
    cum = np.cumsum(weight[order])
    total = cum[-1]
    edges = total * np.arange(1, n_buckets) / n_buckets
    bucket_sorted = 1 + np.searchsorted(edges, cum, side="left")
    out = np.empty(len(ids), dtype=np.int64)
    out[order] = bucket_sorted
    return out


def assign_buckets(pop: Population, n_buckets: int) -> Population:
    """Reassign weighted income-quantile buckets (bucket 1 = lowest income)."""
    if n_buckets < 2:
        raise ValueError("n_buckets must be at least 2")
    bucket = _bucket_indices(pop.reported_income, pop.weight, pop.ids, n_buckets)
    return replace(pop, bucket=bucket, n_buckets=n_buckets)


def generate_population(config: PopulationConfig) -> Population:
    """Draw a synthetic weighted population calibrated to the config vectors.

    Misreport rates rise with income decile, positive adjustments peak in the
    top decile, and audit costs ramp by the configured ratio. Feature columns
    are noisy views of income and of the misreport amount, with the signal
    noise scale rising geometrically across deciles so high-income misreports
    are intrinsically harder to predict. Deterministic for a fixed seed.
    """
    config.validate()
    n = config.n_records
    if n < 10 * GEN_DECILES:
        raise PopulationSizeError(f"need at least {10 * GEN_DECILES} records, got {n}")
    rng = np.random.default_rng(config.seed)

    income = rng.lognormal(config.income_log_mean, config.income_log_sigma, n)
    weight = rng.lognormal(0.0, config.weight_log_sigma, n)
    ids = np.arange(n, dtype=np.int64)
    decile = _bucket_indices(income, weight, ids, GEN_DECILES)
    g = decile - 1

    rate = np.asarray(config.misreport_rate)[g]
    mean_adj = np.asarray(config.mean_adjustment)[g]
    is_mis = rng.random(n) < rate
    shape = config.adjustment_shape
    positive = DE_MINIMIS + rng.gamma(shape, (mean_adj - DE_MINIMIS) / shape, n)
    small_mask = rng.random(n) < np.minimum(1.0, rate * config.subthreshold_frac)
    small = rng.uniform(-config.subthreshold_spread, DE_MINIMIS, n)
    misreport = np.where(is_mis, positive, np.where(small_mask, small, 0.0))

    cost_noise = rng.lognormal(-0.5 * config.cost_log_sigma**2, config.cost_log_sigma, n)
    cost = np.asarray(config.mean_cost)[g] * cost_noise

    noise_scale = config.signal_noise * config.noise_income_factor ** (g / (GEN_DECILES - 1))
    d = config.feature_dim
    features = np.empty((n, d))
    signal = np.arcsinh(misreport)
    features[:, 0] = np.log1p(income) + rng.normal(0.0, config.income_feature_noise, n)
    features[:, 1] = signal + noise_scale * rng.normal(size=n)
    features[:, 2] = 0.5 * signal + 0.75 * noise_scale * rng.normal(size=n)
    features[:, 3] = 0.3 * np.log1p(income) + 0.2 * signal + noise_scale * rng.normal(size=n)
    if d > 4:
        features[:, 4:] = rng.normal(size=(n, d - 4))

    return Population(
        ids=ids,
        features=features,
        reported_income=income,
        misreport=misreport,
        cost=cost,
        weight=weight,
        bucket=decile,
        n_buckets=GEN_DECILES,
    )


CSV_FIXED_COLUMNS = ("id", "weight", "reported_income", "misreport", "cost")


def save_population(pop: Population, path) -> None:
    """Write the CSV schema ``id,weight,reported_income,misreport,cost,f0,...``.

    Buckets are never persisted. Floats use shortest round-trip formatting,
    so save -> load reproduces values exactly.
    """
    path = Path(path)
    header = list(CSV_FIXED_COLUMNS) + [f"f{j}" for j in range(pop.feature_dim)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(pop)):
            row = [
                int(pop.ids[i]),
                repr(float(pop.weight[i])),
                repr(float(pop.reported_income[i])),
                repr(float(pop.misreport[i])),
                repr(float(pop.cost[i])),
            ]
            row.extend(repr(float(x)) for x in pop.features[i])
            writer.writerow(row)


def load_population(source) -> Population:
    """Parse the population CSV schema; errors cite the 1-based data row and column."""
    path = Path(source)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("empty file: missing header") from None
        for col in CSV_FIXED_COLUMNS:
            if col not in header:
                raise CsvParseError(f"missing column {col!r} in header", column=col)
        feature_cols = [c for c in header if c.startswith("f") and c[1:].isdigit()]
        expected = list(CSV_FIXED_COLUMNS) + [f"f{j}" for j in range(len(feature_cols))]
        if header != expected:
            raise CsvParseError(f"header must be {','.join(expected)}, got {','.join(header)}")
        col_index = {c: j for j, c in enumerate(header)}

        ids, weights, incomes, misreports, costs, features = [], [], [], [], [], []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise CsvParseError(f"row {rownum}: expected {len(header)} fields, got {len(row)}", row=rownum)

            def parse(column: str, kind=float):
                raw = row[col_index[column]]
                try:
                    return kind(raw)
                except ValueError:
                    raise CsvParseError(
                        f"row {rownum}, column {column!r}: not numeric: {raw!r}",
                        row=rownum,
                        column=column,
                    ) from None

            ids.append(parse("id", int))
            w = parse("weight")
            if w <= 0:
                raise CsvParseError(f"row {rownum}, column 'weight': must be positive, got {w}", row=rownum, column="weight")
            weights.append(w)
            inc = parse("reported_income")
            if inc < 0:
                raise CsvParseError(
                    f"row {rownum}, column 'reported_income': must be nonnegative, got {inc}",
                    row=rownum,
                    column="reported_income",
                )
            incomes.append(inc)
            misreports.append(parse("misreport"))
            c = parse("cost")
            if c <= 0:
                raise CsvParseError(f"row {rownum}, column 'cost': must be positive, got {c}", row=rownum, column="cost")
            costs.append(c)
            features.append([parse(fc) for fc in expected[len(CSV_FIXED_COLUMNS):]])

    if len(set(ids)) != len(ids):
        raise CsvParseError("duplicate record ids")
    return Population(
        ids=np.array(ids, dtype=np.int64),
        features=np.array(features, dtype=np.float64).reshape(len(ids), len(feature_cols)),
        reported_income=np.array(incomes),
        misreport=np.array(misreports),
        cost=np.array(costs),
        weight=np.array(weights),
    )


def winsorize_misreports(pop: Population, lower_q: float, upper_q: float) -> Population:
    """Clip misreport amounts to the weighted [lower_q, upper_q] quantiles."""
    if not (0.0 <= lower_q < upper_q <= 1.0):
        raise ValueError("need 0 <= lower_q < upper_q <= 1")
    lo, hi = weighted_quantile(pop.misreport, pop.weight, [lower_q, upper_q])
    clipped = np.clip(pop.misreport, lo, hi)
    return replace(pop, misreport=clipped)


def split(pop: Population, test_fraction: float, seed: int) -> tuple[Population, Population]:
    """Disjoint, exhaustive train/test split; test gets round(f * n) records.

    Record order (and ids) within each part follows the parent population.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    n = len(pop)
    n_test = int(round(test_fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return pop.take(train_idx), pop.take(test_idx)


def weighted_subsample(pop: Population, n: int, seed: int) -> Population:
    """Draw n records i.i.d. with replacement, each draw proportional to weight.

    The sample is unweighted (weight 1) and gets fresh sequential ids, since
    draws may repeat source records.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    p = pop.weight / pop.weight.sum()
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pop), size=n, replace=True, p=p)
    return Population(
        ids=np.arange(n, dtype=np.int64),
        features=pop.features[idx],
        reported_income=pop.reported_income[idx],
        misreport=pop.misreport[idx],
        cost=pop.cost[idx],
        weight=np.ones(n),
        bucket=None if pop.bucket is None else pop.bucket[idx],
        n_buckets=pop.n_buckets,
    )
