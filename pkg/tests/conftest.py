"""Shared builders for small synthetic studies."""

import numpy as np
import pytest

from mutfdr.domain import Dataset, DatasetMeta, GeneRecord, MutationTypeTable


@pytest.fixture
def rates_m1():
    return MutationTypeTable(("t0",), np.array([1e-3]), np.array([2e-3]))


@pytest.fixture
def rates_m3():
    return MutationTypeTable(
        ("ts", "tv", "indel"),
        np.array([1.0e-3, 5.0e-4, 2.0e-4]),
        np.array([2.0e-3, 1.0e-3, 4.0e-4]),
    )


def make_gene(gene_id, m=1, cov1=1000, cov2=1000, x1=0, x2=0):
    """GeneRecord with scalar or per-type arguments broadcast to length m."""

    def vec(v):
        arr = np.asarray(v, dtype=np.int64)
        return np.full(m, arr) if arr.ndim == 0 else arr

    return GeneRecord(gene_id, vec(cov1), vec(cov2), vec(x1), vec(x2))


def make_dataset(rates, genes, n1=11, n2=24, description="test"):
    return Dataset(rates, tuple(genes), DatasetMeta(n1, n2, description))


def random_template(rates, n_genes, seed, cov_low=300, cov_high=3000, cov2_scale=2.0):
    """Template dataset with random coverages and all-zero counts."""
    rng = np.random.default_rng(seed)
    m = rates.n_types
    genes = []
    for i in range(n_genes):
        cov1 = rng.integers(cov_low, cov_high, size=m)
        cov2 = (cov1 * cov2_scale * rng.uniform(0.7, 1.3, size=m)).astype(np.int64)
        genes.append(
            GeneRecord(f"g{i:05d}", cov1, cov2, np.zeros(m, np.int64), np.zeros(m, np.int64))
        )
    return make_dataset(rates, genes)


@pytest.fixture
def small_template(rates_m3):
    return random_template(rates_m3, 40, seed=711)
