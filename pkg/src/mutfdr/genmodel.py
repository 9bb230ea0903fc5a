"""Two-stage Poisson generative model.

Counts of type ``m`` in gene ``g`` follow independent Poisson laws whose
means scale with the passenger rate, the coverage, and a gene effect
``theta``:

* discovery stage: ``x1[m] ~ Poisson(gamma1[m] * theta * cov1[m])``;
* validation stage, only for genes with at least one discovery mutation:
  ``x2[m] ~ Poisson(gamma2[m] * theta * cov2[m])``; genes with no
  discovery mutations are never sequenced again, so their validation
  counts are the point mass at zero.

This module evaluates the resulting log-likelihood, computes the per-gene
closed-form effect MLE, and simulates whole datasets from a scenario.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import poisson

from .domain import Dataset, DatasetMeta, GeneRecord, InputError, MutationTypeTable, Scenario
from .rng import KeyedStreams, label_hash

__all__ = [
    "GeneLogLik",
    "GeneTotals",
    "loglik_gene",
    "mle_theta",
    "simulate_dataset",
    "dataset_totals",
]


@dataclass(frozen=True)
class GeneLogLik:
    """Natural-log likelihood of one gene's counts at a given effect."""

    value: float
    gene_id: str


class GeneTotals(NamedTuple):
    """Sufficient statistics per gene for effect-only likelihood ratios.

    ``n`` is the total mutation count and ``s`` the total expected count at
    effect 1, both including validation terms only for screened-in genes.
    The per-gene log-likelihood is ``n*log(theta) - theta*s + const``.
    """

    n1: np.ndarray
    n2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    screened: np.ndarray
    n: np.ndarray
    s: np.ndarray


def dataset_totals(ds: Dataset) -> GeneTotals:
    """Collapse a dataset to per-gene totals (vectorized over genes)."""
    arrays = ds.to_arrays()
    n1 = arrays.x1.sum(axis=1)
    n2 = arrays.x2.sum(axis=1)
    s1 = arrays.cov1 @ ds.rates.gamma1
    s2 = arrays.cov2 @ ds.rates.gamma2
    screened = n1 > 0
    n = n1 + np.where(screened, n2, 0)
    s = s1 + np.where(screened, s2, 0.0)
    return GeneTotals(n1, n2, s1, s2, screened, n, s)


def _stage_exposures(gene: GeneRecord, rates: MutationTypeTable) -> tuple[float, float]:
    return float(gene.cov1 @ rates.gamma1), float(gene.cov2 @ rates.gamma2)


def loglik_gene(gene: GeneRecord, rates: MutationTypeTable, theta: float) -> GeneLogLik:
    """Log-likelihood of one gene's two-stage counts at effect ``theta``.

    ``theta`` may be any value >= 0 so the function can back an MLE search;
    effects below 1 have no substantive interpretation.
    """
    if theta < 0:
        raise InputError(f"effect must be >= 0, got {theta}")
    if gene.n_types != rates.n_types:
        raise InputError("gene and rate table disagree on the number of types")
    if gene.x1.sum() == 0 and gene.x2.sum() != 0:
        raise InputError(f"gene {gene.gene_id!r} violates two-stage screening")
    value = poisson.logpmf(gene.x1, rates.gamma1 * theta * gene.cov1).sum()
    if gene.screened_in:
        value += poisson.logpmf(gene.x2, rates.gamma2 * theta * gene.cov2).sum()
    # else: validation counts are a point mass at zero; contributes log(1).
    return GeneLogLik(value=float(value), gene_id=gene.gene_id)


def mle_theta(gene: GeneRecord, rates: MutationTypeTable) -> float:
    """Closed-form effect MLE: total counts over total expected exposure.

    The validation-stage terms enter only when the gene was screened in.
    Raises when the gene's total expected exposure is zero (no information
    about the effect).
    """
    s1, s2 = _stage_exposures(gene, rates)
    n1 = int(gene.x1.sum())
    n2 = int(gene.x2.sum())
    denom = s1 + (s2 if n1 > 0 else 0.0)
    if denom <= 0.0:
        raise InputError(
            f"gene {gene.gene_id!r}: zero expected exposure, effect MLE undefined"
        )
    num = n1 + (n2 if n1 > 0 else 0)
    return num / denom


def simulate_dataset(scenario: Scenario, template: Dataset, seed: int) -> Dataset:
    """Draw a synthetic dataset over the template's coverages.

    Counts are drawn per gene from its own substream (keyed by
    ``seed ^ hash(gene_id)``), so results do not depend on gene order and
    gene-level draws may be generated concurrently.  Draws exceeding
    coverage are clamped; clamp events are counted in the metadata
    description.  Identical seeds produce identical datasets.
    """
    if scenario.n_genes != template.n_genes:
        raise InputError(
            f"scenario has {scenario.n_genes} effects, template has "
            f"{template.n_genes} genes"
        )
    rates = template.rates
    streams = KeyedStreams(seed)
    genes = []
    n_clamped = 0
    for g, gene in enumerate(template.genes):
        rng = streams.rekey(label_hash(gene.gene_id))
        theta = scenario.theta[g]
        x1 = rng.poisson(rates.gamma1 * theta * gene.cov1)
        over = x1 > gene.cov1
        if over.any():
            n_clamped += int(over.sum())
            x1 = np.minimum(x1, gene.cov1)
        if x1.sum() > 0:
            x2 = rng.poisson(rates.gamma2 * theta * gene.cov2)
            over = x2 > gene.cov2
            if over.any():
                n_clamped += int(over.sum())
                x2 = np.minimum(x2, gene.cov2)
        else:
            x2 = np.zeros_like(gene.cov2)
        genes.append(
            GeneRecord(gene.gene_id, cov1=gene.cov1, cov2=gene.cov2, x1=x1, x2=x2)
        )
    meta = DatasetMeta(
        n_tumors_stage1=template.meta.n_tumors_stage1,
        n_tumors_stage2=template.meta.n_tumors_stage2,
        description=(
            f"simulated seed={seed} scenario_iteration="
            f"{scenario.origin.mcmc_iteration} scenario_seed={scenario.origin.seed} "
            f"clamped={n_clamped}"
        ),
    )
    return Dataset(rates=rates, genes=tuple(genes), meta=meta)
