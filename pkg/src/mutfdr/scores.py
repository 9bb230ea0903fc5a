"""Per-gene prioritization statistics and their Monte Carlo nulls.

Four families of statistics are provided, all oriented so that "more
extreme" means "more driver-like":

* ``camp`` -- minus log10 of the passenger-model binomial probability of
  the observed counts over its ascending rank; genes with no validation
  mutations score -inf.  Larger is more extreme.
* ``tailp_two_stage`` / ``tailp_single_stage`` -- exact upper tail
  probability of the aggregate mutation count under the passenger model,
  respecting (or deliberately ignoring) the two-stage screening.  Smaller
  is more extreme.
* ``loglik_ratio`` -- log-likelihood at effect 1 minus log-likelihood at
  the per-gene effect MLE; always <= 0, more negative is more extreme.
* ``pg_prob`` -- the raw passenger-model binomial probability itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binom, poisson

from .domain import Dataset, GeneRecord, InputError, MutationTypeTable, Scenario, ScenarioOrigin, fmt_float
from .genmodel import dataset_totals, loglik_gene, mle_theta
from .rng import substream_seed

__all__ = [
    "SCORE_KINDS",
    "HIGHER_IS_EXTREME",
    "GeneScore",
    "NullScoreSample",
    "pg_probability",
    "log10_pg_values",
    "camp_from_log10p",
    "camp_scores",
    "tail_pvalue",
    "tail_pvalue_values",
    "loglik_ratio",
    "loglik_ratio_values",
    "score_values",
    "score_dataset",
    "null_score_sample",
    "mc_pvalue",
    "mc_pvalues",
    "save_scores",
    "load_scores",
]

SCORE_KINDS = (
    "camp",
    "tailp_two_stage",
    "tailp_single_stage",
    "loglik_ratio",
    "pg_prob",
)

#: Orientation per kind: True when larger values are more driver-like.
HIGHER_IS_EXTREME = {
    "camp": True,
    "tailp_two_stage": False,
    "tailp_single_stage": False,
    "loglik_ratio": False,
    "pg_prob": False,
}

#: Smallest positive double; tail probabilities are floored here so that
#: p-values stay inside (0, 1] even when the exact value underflows.
_TINY = float(np.nextafter(0.0, 1.0))


@dataclass(frozen=True)
class GeneScore:
    gene_id: str
    kind: str
    value: float
    rank: int


def _check_kind(kind: str) -> None:
    if kind not in SCORE_KINDS:
        raise InputError(f"unknown score kind {kind!r}; expected one of {SCORE_KINDS}")


# ---------------------------------------------------------------------------
# Passenger-model binomial probability and the CaMP score
# ---------------------------------------------------------------------------

def pg_probability(gene: GeneRecord, rates: MutationTypeTable) -> float:
    """Binomial probability of the observed counts under the passenger model.

    Stage-1-only product when the gene has no mutations at all; product
    over both stages when it was screened in; 0 on the (unreachable for
    validated data) remaining branch.
    """
    n1 = int(gene.x1.sum())
    n2 = int(gene.x2.sum())
    if n1 + n2 == 0:
        logp = binom.logpmf(gene.x1, gene.cov1, rates.gamma1).sum()
    elif n1 > 0:
        logp = (
            binom.logpmf(gene.x1, gene.cov1, rates.gamma1).sum()
            + binom.logpmf(gene.x2, gene.cov2, rates.gamma2).sum()
        )
    else:
        return 0.0
    return float(np.exp(logp))


def log10_pg_values(ds: Dataset) -> np.ndarray:
    """log10 of the passenger-model probability, vectorized over genes."""
    arrays = ds.to_arrays()
    if not ds.genes:
        return np.zeros(0)
    stage1 = binom.logpmf(arrays.x1, arrays.cov1, ds.rates.gamma1[None, :]).sum(axis=1)
    stage2 = binom.logpmf(arrays.x2, arrays.cov2, ds.rates.gamma2[None, :]).sum(axis=1)
    screened = arrays.x1.sum(axis=1) > 0
    return (stage1 + np.where(screened, stage2, 0.0)) / np.log(10.0)


def camp_from_log10p(
    log10_p: np.ndarray, validated: np.ndarray, gene_ids: tuple[str, ...]
) -> np.ndarray:
    """CaMP values from log10 probabilities and validation indicators.

    Probabilities are ranked ascending over all genes (rank 1 = smallest,
    ties broken by gene id); the score is ``log10(rank) - log10(p)``, with
    -inf for genes lacking validation mutations.
    """
    order = np.lexsort((np.asarray(gene_ids), log10_p))
    q = np.empty(len(log10_p), dtype=np.int64)
    q[order] = np.arange(1, len(log10_p) + 1)
    values = np.log10(q) - log10_p
    return np.where(validated, values, -np.inf)


def camp_scores(ds: Dataset) -> list[GeneScore]:
    """CaMP score for every gene, with extremity ranks attached."""
    values = score_values(ds, "camp")
    return _to_gene_scores(ds, "camp", values, values)


# ---------------------------------------------------------------------------
# Aggregate-count tail p-values
# ---------------------------------------------------------------------------

def _two_stage_tail(n: int, lam1: float, lam2: float) -> float:
    """P(total count >= n) for the screened two-stage aggregate.

    The aggregate is ``N1 + 1{N1>0} * N2`` with independent Poisson stages.
    For n >= 1 the sum over the stage-1 count k is exact and finite:
    terms with k >= n collapse into the stage-1 survival function.
    """
    if n <= 0:
        return 1.0
    total = poisson.sf(n - 1, lam1)
    ks = np.arange(1, n)
    if ks.size:
        total += float(np.sum(poisson.pmf(ks, lam1) * poisson.sf(n - ks - 1, lam2)))
    return float(min(total, 1.0))


def tail_pvalue(
    gene: GeneRecord,
    rates: MutationTypeTable,
    two_stage: bool = True,
    mid_p: bool = False,
) -> float:
    """Exact tail probability of the gene's aggregate mutation count.

    With ``two_stage`` the null aggregate respects the screening rule
    (validation counts exist only when the discovery count is positive);
    otherwise all exposure is pooled into a single Poisson.  ``mid_p``
    subtracts half the probability of the observed value (diagnostic use).
    """
    lam1 = float(gene.cov1 @ rates.gamma1)
    lam2 = float(gene.cov2 @ rates.gamma2)
    if lam1 <= 0.0:
        raise InputError(
            f"gene {gene.gene_id!r}: discovery exposure must be positive"
        )
    n = int(gene.x1.sum() + gene.x2.sum())
    if two_stage:
        p = _two_stage_tail(n, lam1, lam2)
        if mid_p:
            p -= 0.5 * (p - _two_stage_tail(n + 1, lam1, lam2))
    else:
        p = float(poisson.sf(n - 1, lam1 + lam2))
        if mid_p:
            p -= 0.5 * float(poisson.pmf(n, lam1 + lam2))
    return max(float(p), _TINY)


def tail_pvalue_values(
    ds: Dataset, two_stage: bool = True, mid_p: bool = False
) -> np.ndarray:
    """Tail p-values for a whole dataset (vectorized by observed count)."""
    totals = dataset_totals(ds)
    lam1, lam2 = totals.s1, totals.s2
    if np.any(lam1 <= 0.0):
        bad = ds.genes[int(np.argmax(lam1 <= 0.0))].gene_id
        raise InputError(f"gene {bad!r}: discovery exposure must be positive")
    n_obs = totals.n1 + totals.n2
    if not two_stage:
        p = poisson.sf(n_obs - 1, lam1 + lam2)
        if mid_p:
            p = p - 0.5 * poisson.pmf(n_obs, lam1 + lam2)
        return np.maximum(np.asarray(p, dtype=float), _TINY)

    def tail(n_vec: np.ndarray) -> np.ndarray:
        out = np.ones(len(n_vec))
        for n in np.unique(n_vec):
            n = int(n)
            if n <= 0:
                continue
            idx = np.nonzero(n_vec == n)[0]
            l1, l2 = lam1[idx], lam2[idx]
            acc = poisson.sf(n - 1, l1)
            for k in range(1, n):
                acc = acc + poisson.pmf(k, l1) * poisson.sf(n - k - 1, l2)
            out[idx] = np.minimum(acc, 1.0)
        return out

    p = tail(n_obs)
    if mid_p:
        p = p - 0.5 * (p - tail(n_obs + 1))
    return np.maximum(p, _TINY)


# ---------------------------------------------------------------------------
# Log-likelihood ratio
# ---------------------------------------------------------------------------

def loglik_ratio(gene: GeneRecord, rates: MutationTypeTable) -> float:
    """Log-likelihood at effect 1 minus log-likelihood at the effect MLE.

    Always <= 0; more negative means the passenger hypothesis fits worse.
    A gene with zero expected exposure carries no information and scores 0.
    """
    s1 = float(gene.cov1 @ rates.gamma1)
    s2 = float(gene.cov2 @ rates.gamma2)
    if s1 + (s2 if gene.screened_in else 0.0) <= 0.0:
        return 0.0
    theta_hat = mle_theta(gene, rates)
    return loglik_gene(gene, rates, 1.0).value - loglik_gene(gene, rates, theta_hat).value


def loglik_ratio_values(ds: Dataset) -> np.ndarray:
    """Vectorized log-likelihood ratios via per-gene totals.

    With total count ``n`` and total exposure ``s`` the ratio reduces to
    ``n - s - n*log(n/s)`` (0 at n = 0 by continuity).
    """
    totals = dataset_totals(ds)
    n = totals.n.astype(float)
    s = totals.s
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(n > 0, n * np.log(np.where(n > 0, n, 1.0) / np.where(s > 0, s, 1.0)), 0.0)
    out = n - s - excess
    return np.where(s > 0, out, 0.0)


# ---------------------------------------------------------------------------
# Dataset-level scoring
# ---------------------------------------------------------------------------

def score_values(ds: Dataset, kind: str, mid_p: bool = False) -> np.ndarray:
    """Score every gene; returns values in dataset gene order."""
    _check_kind(kind)
    if kind == "camp":
        log10p = log10_pg_values(ds)
        validated = np.array([int(g.x2.sum()) > 0 for g in ds.genes], dtype=bool)
        return camp_from_log10p(log10p, validated, ds.gene_ids())
    if kind == "tailp_two_stage":
        return tail_pvalue_values(ds, two_stage=True, mid_p=mid_p)
    if kind == "tailp_single_stage":
        return tail_pvalue_values(ds, two_stage=False, mid_p=mid_p)
    if kind == "loglik_ratio":
        return loglik_ratio_values(ds)
    return np.power(10.0, log10_pg_values(ds))


def _extremity_ranks(key: np.ndarray, kind: str, gene_ids: tuple[str, ...]) -> np.ndarray:
    key = -key if HIGHER_IS_EXTREME[kind] else key
    order = np.lexsort((np.asarray(gene_ids), key))
    ranks = np.empty(len(key), dtype=np.int64)
    ranks[order] = np.arange(1, len(key) + 1)
    return ranks


def _to_gene_scores(
    ds: Dataset, kind: str, values: np.ndarray, rank_key: np.ndarray
) -> list[GeneScore]:
    ranks = _extremity_ranks(rank_key, kind, ds.gene_ids())
    return [
        GeneScore(gene_id=g.gene_id, kind=kind, value=float(v), rank=int(r))
        for g, v, r in zip(ds.genes, values, ranks)
    ]


def score_dataset(ds: Dataset, kind: str, mid_p: bool = False) -> list[GeneScore]:
    """Score every gene and attach extremity ranks (1 = most extreme).

    ``pg_prob`` ranks are computed on the log scale, which preserves the
    ordering even when the probability itself underflows.
    """
    values = score_values(ds, kind, mid_p=mid_p)
    rank_key = log10_pg_values(ds) if kind == "pg_prob" else values
    return _to_gene_scores(ds, kind, values, rank_key)


# ---------------------------------------------------------------------------
# Monte Carlo null distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NullScoreSample:
    """Pooled empirical score distribution under an all-passenger genome."""

    kind: str
    values: np.ndarray
    screened_in: tuple[int, ...]
    reps: int

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def null_score_sample(
    template: Dataset, kind: str, reps: int, seed: int, mid_p: bool = False
) -> NullScoreSample:
    """Simulate ``reps`` all-passenger datasets and pool their scores."""
    _check_kind(kind)
    if reps < 1:
        raise InputError(f"reps must be >= 1, got {reps}")
    from .genmodel import simulate_dataset  # local import to avoid cycle noise

    scenario = Scenario(
        theta=np.ones(template.n_genes), origin=ScenarioOrigin(0, seed)
    )
    pooled = []
    screened = []
    for rep in range(reps):
        ds = simulate_dataset(scenario, template, substream_seed(seed, "null", rep))
        pooled.append(score_values(ds, kind, mid_p=mid_p))
        screened.append(int(sum(1 for g in ds.genes if g.screened_in)))
    values = np.concatenate(pooled) if pooled else np.zeros(0)
    return NullScoreSample(
        kind=kind, values=values, screened_in=tuple(screened), reps=reps
    )


def mc_pvalues(values: np.ndarray, null_sample: NullScoreSample) -> np.ndarray:
    """Monte Carlo p-values with add-one smoothing, vectorized.

    ``(1 + #{null at least as extreme}) / (1 + #null)`` under the score
    kind's extremity orientation.
    """
    null = np.asarray(null_sample.values, dtype=float)
    if null.size == 0:
        raise InputError("null sample is empty")
    snull = np.sort(null)
    v = np.asarray(values, dtype=float)
    if HIGHER_IS_EXTREME[null_sample.kind]:
        count = null.size - np.searchsorted(snull, v, side="left")
    else:
        count = np.searchsorted(snull, v, side="right")
    return (1.0 + count) / (1.0 + null.size)


def mc_pvalue(value: float, null_sample: NullScoreSample) -> float:
    """Monte Carlo p-value of one observed score against the pooled null."""
    return float(mc_pvalues(np.array([value]), null_sample)[0])


# ---------------------------------------------------------------------------
# Score files
# ---------------------------------------------------------------------------

_SCORE_HEADER = "gene_id,kind,value,rank"


def save_scores(scores: list[GeneScore], path) -> None:
    rows = [_SCORE_HEADER]
    for s in scores:
        rows.append(f"{s.gene_id},{s.kind},{fmt_float(s.value)},{s.rank}")
    Path(path).write_text("\n".join(rows) + "\n")


def load_scores(path) -> list[GeneScore]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != _SCORE_HEADER:
        raise InputError(f"score file must start with '{_SCORE_HEADER}'")
    out = []
    for i, ln in enumerate(lines[1:], start=1):
        fields = ln.split(",")
        if len(fields) != 4:
            raise InputError(f"score row {i}: expected 4 fields")
        _check_kind(fields[1])
        try:
            value = float(fields[2])
            rank = int(fields[3])
        except ValueError:
            raise InputError(f"score row {i}: malformed value or rank") from None
        out.append(GeneScore(fields[0], fields[1], value, rank))
    return out
