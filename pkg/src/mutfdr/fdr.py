"""Selection procedures with false-discovery-rate control or estimation.

Three methods turn per-gene evidence into rejection sets:

* :func:`bh_select` -- the step-up procedure on p-values; provably keeps
  the FDR below the target level under independence.
* :func:`storey_select` -- the same step-up with bounds inflated by an
  estimate of the null proportion taken from the right tail of the
  p-value distribution.
* :func:`eb_select` -- the two-groups mixture route: the observed score
  density is compared against a simulated all-passenger score density,
  and the largest nested tail region whose estimated false-discovery
  proportion stays below the target is rejected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import InputError, fmt_float

__all__ = ["SelectionResult", "bh_select", "storey_select", "eb_select",
           "save_selection", "load_selection"]

logger = logging.getLogger(__name__)

_METHODS = ("bh", "storey", "eb")


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of one selection run.

    ``threshold`` is the cutoff actually applied (a p-value for bh/storey,
    a score for eb, in the score's native orientation).  ``p0_hat`` is the
    estimated null proportion where the method produces one.
    """

    method: str
    alpha: float
    rejected: frozenset[str]
    threshold: float
    p0_hat: float | None = None


def _check_pvals(pvals: Sequence[tuple[str, float]], alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    for gid, p in pvals:
        if not 0.0 < p <= 1.0:
            raise InputError(f"p-value for {gid!r} must lie in (0, 1], got {p}")


def _step_up(ids, p, bounds, alpha, method, p0_hat):
    """Shared step-up core: largest order statistic below its bound wins."""
    order = np.argsort(p, kind="stable")
    sorted_p = p[order]
    hits = np.nonzero(sorted_p < bounds)[0]
    threshold = float(sorted_p[hits[-1]]) if hits.size else 0.0
    rejected = frozenset(ids[i] for i in np.nonzero(p <= threshold)[0])
    return SelectionResult(
        method=method,
        alpha=alpha,
        rejected=rejected,
        threshold=threshold,
        p0_hat=p0_hat,
    )


def bh_select(pvals: Sequence[tuple[str, float]], alpha: float) -> SelectionResult:
    """Step-up selection at level ``alpha``.

    Rejects every hypothesis with p-value at most the largest sorted
    p-value lying strictly below ``alpha * rank / G``; rejects nothing when
    no order statistic qualifies.
    """
    _check_pvals(pvals, alpha)
    if not pvals:
        return SelectionResult("bh", alpha, frozenset(), 0.0, None)
    ids = [gid for gid, _ in pvals]
    p = np.array([x for _, x in pvals], dtype=float)
    g = len(p)
    bounds = alpha * np.arange(1, g + 1) / g
    return _step_up(ids, p, bounds, alpha, "bh", None)


def storey_select(
    pvals: Sequence[tuple[str, float]], alpha: float, lambda_: float = 0.5
) -> SelectionResult:
    """Step-up selection with bounds inflated by the estimated null share.

    ``p0_hat = min(1, #{p > lambda} / ((1 - lambda) * G))``; the step-up
    bounds become ``alpha * rank / (G * p0_hat)``.  With ``p0_hat`` capped
    at 1 the procedure can only reject more than plain step-up.
    """
    _check_pvals(pvals, alpha)
    if not 0.0 < lambda_ < 1.0:
        raise InputError(f"lambda must lie in (0, 1), got {lambda_}")
    if not pvals:
        return SelectionResult("storey", alpha, frozenset(), 0.0, 1.0)
    ids = [gid for gid, _ in pvals]
    p = np.array([x for _, x in pvals], dtype=float)
    g = len(p)
    p0_hat = min(1.0, float((p > lambda_).sum()) / ((1.0 - lambda_) * g))
    if p0_hat == 0.0:
        # The tail estimate claims no nulls at all; every hypothesis passes.
        return SelectionResult(
            "storey", alpha, frozenset(ids), float(p.max()), 0.0
        )
    bounds = alpha * np.arange(1, g + 1) / (g * p0_hat)
    return _step_up(ids, p, bounds, alpha, "storey", p0_hat)


def _equal_mass_edges(pooled: np.ndarray, n_bins: int) -> np.ndarray:
    finite = pooled[np.isfinite(pooled)]
    if finite.size == 0:
        raise InputError("cannot bin scores: no finite values")
    qs = np.linspace(0.0, 1.0, n_bins + 1)
    edges = np.unique(np.quantile(finite, qs))
    if edges.size < 2:
        edges = np.array([edges[0], edges[0] + 1.0])
    return edges


def _bin_index(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, edges.size - 2)


def eb_select(
    scores: Sequence[tuple[str, float]],
    null_values: np.ndarray,
    alpha: float,
    higher_is_extreme: bool = True,
    n_bins: int = 50,
    p0_bins: int = 10,
) -> SelectionResult:
    """Two-groups selection against a simulated all-passenger score sample.

    The null proportion is estimated as the observed-to-null mass ratio
    over the 10 least-extreme bins of a shared equal-mass histogram
    (clamped to [0, 1]).  Nested tail regions at every distinct observed
    score are then scanned, and the largest region whose estimated
    false-discovery proportion ``p0_hat * F0(region) / F(region)`` is at
    most ``alpha`` is rejected.  A region beyond the null sample's reach
    gets estimate 0 (logged, since the null sample is exhausted there).
    Scores of -inf count as least-extreme mass and are never rejected.
    """
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    null = np.asarray(null_values, dtype=float)
    if null.size == 0:
        raise InputError("null sample is empty")
    if not scores:
        return SelectionResult("eb", alpha, frozenset(), np.inf, None)
    ids = np.array([gid for gid, _ in scores])
    obs = np.array([v for _, v in scores], dtype=float)
    sign = 1.0 if higher_is_extreme else -1.0
    cobs, cnull = sign * obs, sign * null

    edges = _equal_mass_edges(np.concatenate([cobs, cnull]), n_bins)
    n_edges = edges.size
    f = np.bincount(_bin_index(cobs, edges), minlength=n_edges - 1) / cobs.size
    f0 = np.bincount(_bin_index(cnull, edges), minlength=n_edges - 1) / cnull.size
    head = slice(0, min(p0_bins, f.size))
    head_f, head_f0 = float(f[head].sum()), float(f0[head].sum())
    p0_hat = min(head_f / head_f0, 1.0) if head_f0 > 0 else 1.0

    sorted_null = np.sort(cnull)
    thresholds = np.unique(cobs[np.isfinite(cobs)])
    n_at_least = cobs.size - np.searchsorted(np.sort(cobs), thresholds, side="left")
    f_tail = n_at_least / cobs.size
    f0_tail = (cnull.size - np.searchsorted(sorted_null, thresholds, side="left")) / cnull.size
    with np.errstate(divide="ignore", invalid="ignore"):
        est_fdr = np.where(f_tail > 0, p0_hat * f0_tail / f_tail, np.inf)
    qualifying = np.nonzero(est_fdr <= alpha)[0]
    if qualifying.size == 0:
        threshold = np.inf
        rejected = frozenset()
    else:
        j = int(qualifying[0])  # smallest threshold = largest region
        if f0_tail[j] == 0.0:
            logger.debug(
                "eb_select: null sample exhausted beyond threshold %g; "
                "estimated FDR floored at 0", thresholds[j],
            )
        threshold = float(thresholds[j])
        rejected = frozenset(ids[cobs >= threshold])
    return SelectionResult(
        method="eb",
        alpha=alpha,
        rejected=rejected,
        threshold=sign * threshold,
        p0_hat=p0_hat,
    )


# ---------------------------------------------------------------------------
# Selection files
# ---------------------------------------------------------------------------

_SELECTION_HEADER = "gene_id,method,alpha,rejected,threshold,p0_hat"
_SUMMARY_ID = "__summary__"


def save_selection(result: SelectionResult, gene_ids: Sequence[str], path) -> None:
    """One row per scored gene plus a summary row with cutoff and p0_hat."""
    rows = [_SELECTION_HEADER]
    for gid in gene_ids:
        flag = "true" if gid in result.rejected else "false"
        rows.append(f"{gid},{result.method},{fmt_float(result.alpha)},{flag},,")
    p0 = "" if result.p0_hat is None else fmt_float(result.p0_hat)
    rows.append(
        f"{_SUMMARY_ID},{result.method},{fmt_float(result.alpha)},,"
        f"{fmt_float(result.threshold)},{p0}"
    )
    Path(path).write_text("\n".join(rows) + "\n")


def load_selection(path) -> SelectionResult:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != _SELECTION_HEADER:
        raise InputError(f"selection file must start with '{_SELECTION_HEADER}'")
    rejected = set()
    method, alpha, threshold, p0_hat = None, None, 0.0, None
    for ln in lines[1:]:
        gid, method, alpha_s, flag, thr, p0 = ln.split(",")
        alpha = float(alpha_s)
        if gid == _SUMMARY_ID:
            threshold = float(thr)
            p0_hat = float(p0) if p0 else None
        elif flag == "true":
            rejected.add(gid)
    if method is None:
        raise InputError("selection file has no rows")
    return SelectionResult(method, alpha, frozenset(rejected), threshold, p0_hat)
