"""Simulation study: operating characteristics, ROC curves, fit checks.

For every scenario the harness simulates one dataset over the template
coverages, scores it with the requested statistics, runs the requested
selection methods, and measures the realized false-discovery proportion
and selection count against the scenario's known driver set.  Scenario-
level work uses per-scenario derived seeds and order-fixed aggregation,
so results are reproducible bit-for-bit at any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .domain import Dataset, InputError, Scenario, StageSummary, fmt_float, summary_counts
from .fdr import SelectionResult, bh_select, eb_select, storey_select
from .genmodel import dataset_totals, simulate_dataset
from .rng import generator, substream_seed
from .scores import (
    HIGHER_IS_EXTREME,
    NullScoreSample,
    mc_pvalues,
    null_score_sample,
    score_values,
)

__all__ = [
    "OCRow",
    "OperatingCharacteristics",
    "RocCurve",
    "SummaryDistribution",
    "BootstrapVariability",
    "run_benchmark",
    "roc_estimate",
    "fit_summary_distribution",
    "bootstrap_variability",
    "save_oc_table",
    "save_roc",
    "SUMMARY_LABELS",
]

SUMMARY_LABELS = (
    "discovery_0",
    "discovery_1",
    "discovery_multi",
    "validation_0",
    "validation_1",
    "validation_multi",
)

_FDP_QUANTILES = (10, 25, 50, 75, 90)

#: Score kinds whose values are already valid p-values for step-up methods.
_PVALUE_KINDS = frozenset({"tailp_two_stage", "tailp_single_stage"})


@dataclass(frozen=True)
class OCRow:
    method: str
    kind: str
    alpha: float
    mean_fdp: float
    mean_selected: float
    fdp_quantiles: dict[str, float]
    n_scenarios: int


@dataclass(frozen=True)
class OperatingCharacteristics:
    rows: tuple[OCRow, ...]

    def row(self, method: str, kind: str, alpha: float) -> OCRow:
        for r in self.rows:
            if r.method == method and r.kind == kind and math.isclose(r.alpha, alpha):
                return r
        raise KeyError((method, kind, alpha))


def _summaries_to_array(summary: StageSummary) -> np.ndarray:
    return np.array(summary.discovery + summary.validation, dtype=float)


def _select(
    method: str,
    kind: str,
    alpha: float,
    gene_ids: Sequence[str],
    values: np.ndarray,
    pvals: np.ndarray | None,
    null: NullScoreSample | None,
    storey_lambda: float,
) -> SelectionResult:
    if method in ("bh", "storey"):
        pairs = list(zip(gene_ids, pvals))
        if method == "bh":
            return bh_select(pairs, alpha)
        return storey_select(pairs, alpha, lambda_=storey_lambda)
    if method == "eb":
        return eb_select(
            list(zip(gene_ids, values)),
            null.values,
            alpha,
            higher_is_extreme=HIGHER_IS_EXTREME[kind],
        )
    raise InputError(f"unknown method {method!r}")


def run_benchmark(
    scenarios: Sequence[Scenario],
    template: Dataset,
    methods: Sequence[str],
    kinds: Sequence[str],
    alphas: Sequence[float],
    seed: int,
    null_reps: int = 30,
    storey_lambda: float = 0.5,
    threads: int = 1,
) -> OperatingCharacteristics:
    """Operating characteristics of every method x statistic x level combo.

    Per scenario: simulate one dataset, score it, select at each level,
    and record the false-discovery proportion (0 when nothing is
    rejected) and the selection count against the scenario's driver mask.
    """
    if not scenarios or not methods or not kinds or not alphas:
        raise InputError("benchmark needs scenarios, methods, kinds, and alphas")
    gene_ids = template.gene_ids()
    id_to_idx = {gid: i for i, gid in enumerate(gene_ids)}

    needs_null = {}
    for kind in kinds:
        needs_mc = kind not in _PVALUE_KINDS and any(
            m in ("bh", "storey") for m in methods
        )
        if "eb" in methods or needs_mc:
            needs_null[kind] = null_score_sample(
                template, kind, null_reps, substream_seed(seed, "null", kind)
            )

    combos = [(m, k, a) for m in methods for k in kinds for a in alphas]

    def one_scenario(i: int):
        scn = scenarios[i]
        ds = simulate_dataset(scn, template, substream_seed(seed, "scenario", i))
        passenger = ~scn.driver_mask
        out = {}
        for kind in kinds:
            values = score_values(ds, kind)
            pvals = None
            if any(m in ("bh", "storey") for m in methods):
                if kind in _PVALUE_KINDS:
                    pvals = values
                else:
                    pvals = mc_pvalues(values, needs_null[kind])
            for method in methods:
                for alpha in alphas:
                    res = _select(
                        method, kind, alpha, gene_ids, values, pvals,
                        needs_null.get(kind), storey_lambda,
                    )
                    n_rej = len(res.rejected)
                    if n_rej == 0:
                        fdp = 0.0
                    else:
                        v = sum(1 for gid in res.rejected if passenger[id_to_idx[gid]])
                        fdp = v / n_rej
                    out[(method, kind, alpha)] = (fdp, n_rej)
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_scenario = list(pool.map(one_scenario, range(len(scenarios))))
    else:
        per_scenario = [one_scenario(i) for i in range(len(scenarios))]

    rows = []
    for combo in combos:
        fdps = np.array([res[combo][0] for res in per_scenario])
        nsel = np.array([res[combo][1] for res in per_scenario], dtype=float)
        qs = np.percentile(fdps, _FDP_QUANTILES)
        rows.append(
            OCRow(
                method=combo[0],
                kind=combo[1],
                alpha=combo[2],
                mean_fdp=float(fdps.mean()),
                mean_selected=float(nsel.mean()),
                fdp_quantiles={
                    f"p{q}": float(v) for q, v in zip(_FDP_QUANTILES, qs)
                },
                n_scenarios=len(scenarios),
            )
        )
    return OperatingCharacteristics(rows=tuple(rows))


# ---------------------------------------------------------------------------
# ROC curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RocCurve:
    """Empirical ROC points (FPR strictly increasing) and partial AUC."""

    points: np.ndarray
    pauc_at_2pct: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InputError("ROC points must be an (n, 2) array")
        if np.any(pts < -1e-12) or np.any(pts > 1 + 1e-12):
            raise InputError("ROC points must lie in the unit square")
        if np.any(np.diff(pts[:, 0]) <= 0):
            raise InputError("ROC FPR values must be strictly increasing")
        if not 0.0 <= self.pauc_at_2pct <= 0.02 + 1e-12:
            raise InputError("partial AUC must lie in [0, 0.02]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


def _roc_from_samples(
    driver_scores: np.ndarray, passenger_scores: np.ndarray, grid: np.ndarray | None
) -> np.ndarray:
    """ROC points from pooled score samples, canonical (higher = extreme)."""
    if grid is None:
        pooled = np.concatenate([driver_scores, passenger_scores])
        finite = pooled[np.isfinite(pooled)]
        uniq = np.unique(finite)
        if uniq.size > 4096:
            qs = np.linspace(0.0, 1.0, 4097)
            uniq = np.unique(np.quantile(finite, qs, method="nearest"))
        thresholds = uniq
    else:
        thresholds = np.sort(np.asarray(grid, dtype=float))
    sd = np.sort(driver_scores)
    sp = np.sort(passenger_scores)
    # P(score >= t) via sorted-array positions, swept over descending t.
    tpr = 1.0 - np.searchsorted(sd, thresholds, side="left") / sd.size
    fpr = 1.0 - np.searchsorted(sp, thresholds, side="left") / sp.size
    order = np.argsort(fpr, kind="stable")
    fpr, tpr = fpr[order], tpr[order]
    # Collapse ties in FPR to the best attainable TPR, keep curve monotone.
    pts = [(0.0, 0.0)]
    for x, y in zip(fpr, tpr):
        if x == pts[-1][0]:
            pts[-1] = (x, max(pts[-1][1], y))
        else:
            pts.append((float(x), float(y)))
    if pts[-1][0] < 1.0:
        pts.append((1.0, 1.0))
    return np.array(pts)


def _partial_auc(points: np.ndarray, limit: float = 0.02) -> float:
    fpr, tpr = points[:, 0], points[:, 1]
    if fpr[-1] < limit:
        xs = np.append(fpr, limit)
        ys = np.append(tpr, tpr[-1])
    else:
        cut = np.searchsorted(fpr, limit, side="right")
        xs = np.append(fpr[:cut], limit)
        ys = np.append(tpr[:cut], np.interp(limit, fpr, tpr))
    return float(np.trapz(ys, xs))


def roc_estimate(
    scenarios: Sequence[Scenario],
    template: Dataset,
    kind: str,
    grid: np.ndarray | None = None,
    seed: int = 0,
) -> RocCurve:
    """Pooled driver-vs-passenger ROC for one statistic across scenarios."""
    if not scenarios:
        raise InputError("roc estimate needs at least one scenario")
    driver_scores, passenger_scores = [], []
    for i, scn in enumerate(scenarios):
        ds = simulate_dataset(scn, template, substream_seed(seed, "scenario", i))
        values = score_values(ds, kind)
        mask = scn.driver_mask
        driver_scores.append(values[mask])
        passenger_scores.append(values[~mask])
    drivers = np.concatenate(driver_scores)
    passengers = np.concatenate(passenger_scores)
    if drivers.size == 0:
        raise InputError("no drivers in any scenario")
    if passengers.size == 0:
        raise InputError("no passengers in any scenario")
    if not HIGHER_IS_EXTREME[kind]:
        drivers, passengers = -drivers, -passengers
        grid = None if grid is None else -np.asarray(grid, dtype=float)
    points = _roc_from_samples(drivers, passengers, grid)
    return RocCurve(points=points, pauc_at_2pct=_partial_auc(points))


# ---------------------------------------------------------------------------
# Posterior-predictive fit summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SummaryDistribution:
    """Across-scenario distribution of the six stage-summary counts."""

    counts: np.ndarray
    lower90: np.ndarray
    upper90: np.ndarray
    sds: np.ndarray
    labels: tuple[str, ...] = SUMMARY_LABELS

    def covers(self, observed: StageSummary) -> np.ndarray:
        obs = _summaries_to_array(observed)
        return (obs >= self.lower90) & (obs <= self.upper90)


def fit_summary_distribution(
    scenarios: Sequence[Scenario], template: Dataset, seed: int = 0
) -> SummaryDistribution:
    """Simulate one dataset per scenario and summarize the six counts."""
    if not scenarios:
        raise InputError("need at least one scenario")
    counts = np.zeros((len(scenarios), 6))
    for i, scn in enumerate(scenarios):
        ds = simulate_dataset(scn, template, substream_seed(seed, "scenario", i))
        counts[i] = _summaries_to_array(summary_counts(ds))
    lower = np.percentile(counts, 5, axis=0)
    upper = np.percentile(counts, 95, axis=0)
    return SummaryDistribution(
        counts=counts,
        lower90=lower,
        upper90=upper,
        sds=counts.std(axis=0, ddof=1),
    )


# ---------------------------------------------------------------------------
# Parametric bootstrap variability check
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BootstrapVariability:
    """Bootstrap SDs of the six counts, optionally with scenario SD ratios."""

    sds: np.ndarray
    ratios: np.ndarray | None
    fallbacks: tuple[str, ...]
    labels: tuple[str, ...] = SUMMARY_LABELS


def _logistic_irls(X: np.ndarray, y: np.ndarray, tol: float = 1e-10, max_iter: int = 200):
    """Logistic MLE by iteratively reweighted least squares.

    Returns (fitted probabilities, separated flag).  Separation is called
    when the linear predictor runs away, in which case the caller falls
    back to an intercept-only fit.
    """
    beta = np.zeros(X.shape[1])
    dev_prev = np.inf
    separated = False
    for _ in range(max_iter):
        eta = X @ beta
        if np.any(np.abs(eta) > 30.0):
            separated = True
            break
        mu = expit(eta)
        mu = np.clip(mu, 1e-12, 1.0 - 1e-12)
        w = mu * (1.0 - mu)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
        dev = -2.0 * float(np.sum(y * np.log(mu) + (1 - y) * np.log(1 - mu)))
        if abs(dev_prev - dev) < tol:
            break
        dev_prev = dev
    eta = X @ beta
    if np.any(np.abs(eta) > 30.0):
        separated = True
    return expit(np.clip(eta, -30.0, 30.0)), separated


def bootstrap_variability(
    observed: Dataset,
    reps: int,
    seed: int,
    scenario_sds: np.ndarray | None = None,
) -> BootstrapVariability:
    """Parametric bootstrap of the six stage-summary counts.

    Four per-gene logistic regressions (events: one discovery mutation,
    several discovery mutations, screened-in with one validation mutation,
    screened-in with several) are fit on coverage-derived covariates; the
    fitted probabilities drive independent per-gene redraws of the summary
    classes.  When ``scenario_sds`` is given, the scenario-based SDs are
    divided by the bootstrap SDs.
    """
    if reps < 100:
        raise InputError(f"bootstrap needs reps >= 100, got {reps}")
    totals = dataset_totals(observed)
    n1, n2 = totals.n1, totals.n2
    g = observed.n_genes
    if g == 0:
        raise InputError("cannot bootstrap an empty dataset")
    arrays = observed.to_arrays()
    cov_total = arrays.cov1.sum(axis=1).astype(float)
    X = np.column_stack(
        [np.ones(g), np.log1p(cov_total), np.log1p(totals.s1)]
    )
    events = {
        "discovery_one": (n1 == 1).astype(float),
        "discovery_multi": (n1 > 1).astype(float),
        "validation_one": ((n1 >= 1) & (n2 == 1)).astype(float),
        "validation_multi": ((n1 >= 1) & (n2 > 1)).astype(float),
    }
    probs = {}
    fallbacks = []
    for name, y in events.items():
        fitted, separated = _logistic_irls(X, y)
        if separated:
            fallbacks.append(name)
            fitted = np.full(g, y.mean())
        probs[name] = fitted

    p_one = probs["discovery_one"]
    p_multi = probs["discovery_multi"]
    scale = np.maximum(p_one + p_multi, 1e-300)
    over = scale > 1.0
    if over.any():
        p_one = np.where(over, p_one / scale, p_one)
        p_multi = np.where(over, p_multi / scale, p_multi)
        scale = np.minimum(scale, 1.0)
    c_one = np.clip(probs["validation_one"] / scale, 0.0, 1.0)
    c_multi = np.clip(probs["validation_multi"] / scale, 0.0, 1.0)
    csum = c_one + c_multi
    bad = csum > 1.0
    if bad.any():
        c_one = np.where(bad, c_one / csum, c_one)
        c_multi = np.where(bad, c_multi / csum, c_multi)

    rng = generator(substream_seed(seed, "bootstrap"))
    counts = np.zeros((reps, 6))
    for r in range(reps):
        u1 = rng.random(g)
        one = u1 < p_one
        multi = (u1 >= p_one) & (u1 < p_one + p_multi)
        screened = one | multi
        u2 = rng.random(g)
        v_one = screened & (u2 < c_one)
        v_multi = screened & (u2 >= c_one) & (u2 < c_one + c_multi)
        counts[r] = (
            g - one.sum() - multi.sum(),
            one.sum(),
            multi.sum(),
            screened.sum() - v_one.sum() - v_multi.sum(),
            v_one.sum(),
            v_multi.sum(),
        )
    sds = counts.std(axis=0, ddof=1)
    ratios = None
    if scenario_sds is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(sds > 0, np.asarray(scenario_sds) / sds, np.nan)
    return BootstrapVariability(sds=sds, ratios=ratios, fallbacks=tuple(fallbacks))


# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------

def save_oc_table(oc: OperatingCharacteristics, path) -> None:
    header = (
        "method,kind,alpha,mean_fdp,mean_selected,"
        + ",".join(f"fdp_p{q}" for q in _FDP_QUANTILES)
        + ",n_scenarios"
    )
    rows = [header]
    for r in oc.rows:
        cells = [r.method, r.kind, fmt_float(r.alpha), fmt_float(r.mean_fdp),
                 fmt_float(r.mean_selected)]
        cells += [fmt_float(r.fdp_quantiles[f"p{q}"]) for q in _FDP_QUANTILES]
        cells.append(str(r.n_scenarios))
        rows.append(",".join(cells))
    Path(path).write_text("\n".join(rows) + "\n")


def save_roc(curve: RocCurve, path) -> None:
    rows = [f"# pauc_at_2pct={fmt_float(curve.pauc_at_2pct)}", "fpr,tpr"]
    for x, y in curve.points:
        rows.append(f"{fmt_float(x)},{fmt_float(y)}")
    Path(path).write_text("\n".join(rows) + "\n")
