import numpy as np
import pytest

from audit_alloc.population import Population


def make_population(incomes, misreports, weights=None, costs=None, buckets=None,
                    features=None, n_buckets=10) -> Population:
    """Small hand-built population; features default to a single zero column."""
    n = len(incomes)
    return Population(
        ids=np.arange(n, dtype=np.int64),
        features=np.zeros((n, 1)) if features is None else np.asarray(features, dtype=float),
        reported_income=np.asarray(incomes, dtype=float),
        misreport=np.asarray(misreports, dtype=float),
        cost=np.ones(n) if costs is None else np.asarray(costs, dtype=float),
        weight=np.ones(n) if weights is None else np.asarray(weights, dtype=float),
        bucket=None if buckets is None else np.asarray(buckets, dtype=np.int64),
        n_buckets=n_buckets,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
