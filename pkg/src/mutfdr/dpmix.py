"""Dirichlet-process mixture over gene effects.

The unknown distribution of gene effects gets a Dirichlet-process prior
whose base measure mixes a point mass at 1 (passengers) with a shifted
gamma on (1, inf) (driver effects):

    base(dx) = total_mass * [spike_fraction * delta_1(dx)
               + (1 - spike_fraction) * ShiftedGamma(shape, rate)(dx)].

Because every per-gene likelihood reduces to ``theta^n * exp(-theta*s)``
times a constant, integrals of likelihood products against the base
measure have a closed form: expanding ``theta^n = (1+u)^n`` binomially
turns the continuous part into a finite mixture of gamma integrals.  That
closed form drives both the marginal-likelihood evaluations and the
Polya-urn Gibbs sampler.

The sampler state is the standard cluster representation: each cluster
carries an effect value drawn from the base measure, so several clusters
may sit on the atom at 1 simultaneously.  Emitted states merge all
atom-valued clusters into the reported spike cluster 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .domain import Dataset, GeneRecord, InputError, MutationTypeTable, Scenario, ScenarioOrigin
from .genmodel import dataset_totals
from .rng import generator, substream_seed

__all__ = [
    "ElicitationError",
    "SpikedBaseMeasure",
    "MixingEstimate",
    "PosteriorState",
    "DriverCountSummary",
    "npmle_fit",
    "elicit_base_measure",
    "cluster_marginal_loglik",
    "run_mcmc",
    "export_scenarios",
    "posterior_driver_count",
    "state_diagnostics",
]

_THETA_NUDGE = 1e-12


class ElicitationError(InputError):
    """Base-measure elicitation failed (infeasible spike mass or moments)."""


@dataclass(frozen=True)
class SpikedBaseMeasure:
    """Spike-and-slab base measure of the Dirichlet process.

    ``total_mass`` is the overall measure of [1, inf) and acts as the DP
    concentration.  The normalized measure puts ``spike_fraction`` on the
    atom at 1 and the rest on ``1 + Gamma(shape, rate)``.
    """

    total_mass: float
    spike_fraction: float
    shape: float
    rate: float

    def __post_init__(self):
        if not self.total_mass > 0:
            raise InputError(f"total_mass must be positive, got {self.total_mass}")
        if not 0.0 < self.spike_fraction < 1.0:
            raise InputError(
                f"spike_fraction must lie in (0, 1), got {self.spike_fraction}"
            )
        if not (self.shape > 0 and self.rate > 0):
            raise InputError("gamma shape and rate must be positive")


@dataclass(frozen=True, eq=False)
class MixingEstimate:
    """Discrete estimate of the effect mixing distribution."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if support.ndim != 1 or support.shape != weights.shape:
            raise InputError("support and weights must be equal-length vectors")
        if support.size == 0:
            raise InputError("mixing estimate needs at least one support point")
        if np.any(np.diff(support) <= 0):
            raise InputError("support must be strictly ascending")
        if np.any(support < 1.0):
            raise InputError("effects must be >= 1")
        if np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, abs_tol=1e-9):
            raise InputError("weights must be nonnegative and sum to 1")
        weights = weights / weights.sum()
        support.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    def mass_below(self, upper: float) -> float:
        """Probability mass on [1, upper)."""
        return float(self.weights[self.support < upper].sum())

    def mean(self) -> float:
        return float(self.weights @ self.support)

    def variance(self) -> float:
        mu = self.mean()
        return float(self.weights @ (self.support - mu) ** 2)


@dataclass(frozen=True, eq=False)
class PosteriorState:
    """One retained sweep: per-gene cluster labels and cluster effects.

    Cluster 0 is the spike (effect exactly 1); all other clusters carry
    effects strictly above 1.
    """

    assignment: np.ndarray
    cluster_theta: tuple[float, ...]
    iteration: int

    def __post_init__(self):
        arr = np.asarray(self.assignment, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "assignment", arr)

    def theta_vector(self) -> np.ndarray:
        return np.asarray(self.cluster_theta, dtype=float)[self.assignment]

    def n_drivers(self) -> int:
        return int((self.assignment != 0).sum())


# ---------------------------------------------------------------------------
# Nonparametric MLE of the mixing distribution (fixed-grid EM)
# ---------------------------------------------------------------------------

def npmle_fit(
    ds: Dataset,
    grid: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 2000,
) -> MixingEstimate:
    """Maximum-likelihood mixing weights on a fixed effect grid.

    EM on the mixture log-likelihood ``sum_g log sum_k w_k L_g(grid[k])``,
    stopping when the objective gain drops below ``tol``.  Support points
    whose converged weight is numerically zero are pruned.
    """
    if grid is None:
        grid = np.geomspace(1.0, 1e3, 200)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InputError("effect grid is empty")
    if grid[0] != 1.0:
        raise InputError("effect grid must start at 1")
    if np.any(np.diff(grid) <= 0):
        raise InputError("effect grid must be strictly ascending")
    if tol <= 0:
        raise InputError("tol must be positive")
    if ds.n_genes == 0:
        raise InputError("cannot fit a mixing distribution to an empty dataset")

    totals = dataset_totals(ds)
    log_lik = (
        totals.n[:, None] * np.log(grid)[None, :]
        - totals.s[:, None] * grid[None, :]
    )
    if not np.all(np.isfinite(log_lik)):
        raise InputError("non-finite likelihood on the effect grid")

    log_w = np.full(grid.size, -math.log(grid.size))
    prev = -np.inf
    for _ in range(max_iter):
        joint = log_lik + log_w[None, :]
        row_lse = logsumexp(joint, axis=1)
        objective = float(row_lse.sum())
        if not math.isfinite(objective):
            raise InputError("non-finite mixture likelihood during EM")
        resp = np.exp(joint - row_lse[:, None])
        weights = resp.mean(axis=0)
        with np.errstate(divide="ignore"):
            log_w = np.log(weights)
        if objective - prev < tol:
            break
        prev = objective
    weights = np.exp(log_w)
    keep = weights > 1e-12
    weights = weights[keep]
    return MixingEstimate(support=grid[keep], weights=weights / weights.sum())


def elicit_base_measure(
    fhat: MixingEstimate,
    total_mass: float = 1.0,
    spike_window: float = 2.0,
) -> SpikedBaseMeasure:
    """Moment-match the base measure's centering distribution to ``fhat``.

    The spike fraction is the fitted mass on ``[1, spike_window)``; the
    gamma shape and rate then solve the two equations matching the mean
    and variance of the full spike-plus-shifted-gamma mixture to those of
    ``fhat``.
    """
    pi0 = fhat.mass_below(spike_window)
    if not 0.0 < pi0 < 1.0:
        raise ElicitationError(
            f"spike fraction from mass below {spike_window} is {pi0}; "
            "need mass both below and at/above the window"
        )
    mean_f = fhat.mean()
    var_f = fhat.variance()
    cont_mean = (mean_f - 1.0) / (1.0 - pi0)
    if cont_mean <= 0.0:
        raise ElicitationError(
            f"infeasible mean: continuous part would need mean 1 + {cont_mean}"
        )
    cont_var = (var_f + mean_f**2 - 1.0) / (1.0 - pi0) - 2.0 * cont_mean - cont_mean**2
    if cont_var <= 0.0:
        raise ElicitationError(
            f"infeasible variance: residual variance {cont_var} after spike "
            "subtraction is not positive"
        )
    rate = cont_mean / cont_var
    shape = cont_mean**2 / cont_var
    base = SpikedBaseMeasure(
        total_mass=total_mass, spike_fraction=pi0, shape=shape, rate=rate
    )
    # Closed-form solution must reproduce the target moments exactly.
    mix_mean = 1.0 + (1.0 - pi0) * shape / rate
    mix_ex2 = pi0 + (1.0 - pi0) * (
        1.0 + 2.0 * shape / rate + shape * (shape + 1.0) / rate**2
    )
    if abs(mix_mean - mean_f) > 1e-9 * max(1.0, abs(mean_f)) or abs(
        (mix_ex2 - mix_mean**2) - var_f
    ) > 1e-9 * max(1.0, abs(var_f)):
        raise ElicitationError("moment matching failed to verify")
    return base


# ---------------------------------------------------------------------------
# Closed-form marginal likelihood
# ---------------------------------------------------------------------------

def _log_gamma_series(n: int, s: float, shape: float, rate: float) -> float:
    """log of sum_k C(n,k) rate^shape Gamma(shape+k) / (Gamma(shape) (rate+s)^(shape+k)).

    This equals ``log E[(1+U)^n exp(-s U)]`` for ``U ~ Gamma(shape, rate)``,
    the continuous-part factor of the marginal after pulling out exp(-s).
    """
    k = np.arange(n + 1)
    terms = (
        gammaln(n + 1.0)
        - gammaln(k + 1.0)
        - gammaln(n - k + 1.0)
        + shape * math.log(rate)
        + gammaln(shape + k)
        - gammaln(shape)
        - (shape + k) * math.log(rate + s)
    )
    return float(logsumexp(terms))


def _gene_reduction(gene: GeneRecord, rates: MutationTypeTable):
    """(n, s, log_const) of one gene's likelihood ``const * theta^n e^(-theta s)``."""
    n1 = int(gene.x1.sum())
    n2 = int(gene.x2.sum())
    if n1 == 0 and n2 != 0:
        raise InputError(f"gene {gene.gene_id!r} violates two-stage screening")
    s = float(gene.cov1 @ rates.gamma1)
    n = n1
    log_const = 0.0
    mask = gene.x1 > 0
    if mask.any():
        x = gene.x1[mask]
        log_const += float(
            (x * np.log(rates.gamma1[mask] * gene.cov1[mask]) - gammaln(x + 1.0)).sum()
        )
    if n1 > 0:
        s += float(gene.cov2 @ rates.gamma2)
        n += n2
        mask = gene.x2 > 0
        if mask.any():
            x = gene.x2[mask]
            log_const += float(
                (x * np.log(rates.gamma2[mask] * gene.cov2[mask]) - gammaln(x + 1.0)).sum()
            )
    return n, s, log_const


def cluster_marginal_loglik(
    genes: Iterable[GeneRecord],
    rates: MutationTypeTable,
    base: SpikedBaseMeasure,
) -> float:
    """log integral of the genes' joint likelihood against the centering measure.

    The spike contributes ``spike_fraction * exp(-s)`` and the continuous
    part a finite gamma series; both share the count-dependent constants.
    Evaluated entirely in log space.
    """
    genes = list(genes)
    if not genes:
        raise InputError("cluster marginal needs at least one gene")
    n_tot, s_tot, log_const = 0, 0.0, 0.0
    for gene in genes:
        n, s, lc = _gene_reduction(gene, rates)
        n_tot += n
        s_tot += s
        log_const += lc
    log_series = _log_gamma_series(n_tot, s_tot, base.shape, base.rate)
    return log_const - s_tot + float(
        np.logaddexp(
            math.log(base.spike_fraction),
            math.log1p(-base.spike_fraction) + log_series,
        )
    )


# ---------------------------------------------------------------------------
# Polya-urn Gibbs sampler
# ---------------------------------------------------------------------------

def _slice_positive(logf, u0: float, rng: np.random.Generator, width: float) -> float:
    """One slice-sampling update for a univariate density on (0, inf)."""
    y = logf(u0) - rng.exponential()
    left = u0 - width * rng.random()
    right = left + width
    while left > 0.0 and logf(left) > y:
        left -= width
    left = max(left, 0.0)
    while logf(right) > y:
        right += width
    while True:
        u = left + rng.random() * (right - left)
        if u > 0.0 and logf(u) > y:
            return u
        if u < u0:
            left = u
        else:
            right = u


class _UrnChain:
    """Mutable sampler state: cluster effects, sizes, and gene labels."""

    def __init__(self, totals, base: SpikedBaseMeasure, rng: np.random.Generator):
        self.n = totals.n.astype(np.int64)
        self.s = totals.s.astype(float)
        self.base = base
        self.rng = rng
        g = len(self.n)
        self.assignment: list[int] = [0] * g
        self.thetas: list[float] = [1.0]
        self.logthetas: list[float] = [0.0]
        self.sizes: list[int] = [g]
        self.free: list[int] = []

        log_pi0 = math.log(base.spike_fraction)
        log_pic = math.log1p(-base.spike_fraction)
        self._log_series = np.array(
            [
                _log_gamma_series(int(n_g), float(s_g), base.shape, base.rate)
                for n_g, s_g in zip(self.n, self.s)
            ]
        )
        # Fresh-draw log weight per gene: concentration times the marginal.
        self._log_fresh = (
            math.log(base.total_mass)
            - self.s
            + np.logaddexp(log_pi0, log_pic + self._log_series)
        )
        # Probability the fresh draw lands on the atom rather than the slab.
        self._p_atom_fresh = np.exp(
            log_pi0 - np.logaddexp(log_pi0, log_pic + self._log_series)
        )
        # Plain-float copies for the per-gene scan (cheaper than numpy scalars).
        self._n_list = [float(v) for v in self.n]
        self._s_list = [float(v) for v in self.s]
        self._log_fresh_list = [float(v) for v in self._log_fresh]
        self._p_atom_list = [float(v) for v in self._p_atom_fresh]
        self._series_cache: dict[int, tuple] = {}

    def _series_tables(self, n: int, s: float):
        """Cumulative weights and gamma orders of the slab posterior mixture."""
        key = n
        cached = self._series_cache.get(key)
        if cached is not None and cached[2] == s:
            return cached[0], cached[1]
        k = np.arange(n + 1)
        logt = (
            gammaln(n + 1.0)
            - gammaln(k + 1.0)
            - gammaln(n - k + 1.0)
            + gammaln(self.base.shape + k)
            - (self.base.shape + k) * math.log(self.base.rate + s)
        )
        w = np.exp(logt - logt.max())
        cum = np.cumsum(w)
        cum /= cum[-1]
        self._series_cache[key] = (cum, k, s)
        return cum, k

    def _draw_slab(self, n: int, s: float) -> float:
        """Exact draw from the slab posterior: a finite mixture of gammas."""
        cum, k = self._series_tables(n, s)
        j = int(np.searchsorted(cum, self.rng.random()))
        u = self.rng.gamma(self.base.shape + k[j], 1.0 / (self.base.rate + s))
        return u if u > 0.0 else _THETA_NUDGE

    def _new_cluster(self, theta: float) -> int:
        if self.free:
            c = self.free.pop()
            self.thetas[c] = theta
            self.logthetas[c] = math.log(theta)
            self.sizes[c] = 1
        else:
            c = len(self.thetas)
            self.thetas.append(theta)
            self.logthetas.append(math.log(theta))
            self.sizes.append(1)
        return c

    def sweep_assignments(self) -> None:
        """Polya-urn reassignment scan over genes (sequential by design)."""
        thetas, logthetas, sizes = self.thetas, self.logthetas, self.sizes
        assignment = self.assignment
        rng_random = self.rng.random
        log = math.log
        exp = math.exp
        for g in range(len(self._n_list)):
            c_old = assignment[g]
            sizes[c_old] -= 1
            if sizes[c_old] == 0:
                self.free.append(c_old)
            n_g = self._n_list[g]
            s_g = self._s_list[g]
            # Candidate log weights: every occupied cluster, then a fresh draw.
            cands = []
            logws = []
            for c in range(len(thetas)):
                m = sizes[c]
                if m > 0:
                    cands.append(c)
                    logws.append(log(m) + n_g * logthetas[c] - thetas[c] * s_g)
            logws.append(self._log_fresh_list[g])
            top = max(logws)
            ws = [exp(v - top) for v in logws]
            target = rng_random() * sum(ws)
            acc = 0.0
            pick = len(ws) - 1
            for i, w in enumerate(ws):
                acc += w
                if target <= acc:
                    pick = i
                    break
            if pick < len(cands):
                c_new = cands[pick]
                sizes[c_new] += 1
            else:
                if rng_random() < self._p_atom_list[g]:
                    theta = 1.0
                else:
                    theta = 1.0 + self._draw_slab(int(n_g), s_g)
                c_new = self._new_cluster(theta)
            assignment[g] = c_new

    def sweep_cluster_effects(self) -> None:
        """Resample each occupied cluster's effect from its conditional.

        The conditional mixes the atom at 1 (with exact posterior odds)
        and the slab density; the slab branch is updated by slice sampling
        when the cluster already sits in it, and by an exact mixture draw
        when it enters from the atom.
        """
        base = self.base
        n_slots = len(self.thetas)
        n_c = np.bincount(self.assignment, weights=self.n, minlength=n_slots)
        s_c = np.bincount(self.assignment, weights=self.s, minlength=n_slots)
        log_pi0 = math.log(base.spike_fraction)
        log_pic = math.log1p(-base.spike_fraction)
        for c in range(n_slots):
            if self.sizes[c] == 0:
                continue
            n_tot, s_tot = int(n_c[c]), float(s_c[c])
            log_series = _log_gamma_series(n_tot, s_tot, base.shape, base.rate)
            log_slab = log_pic + log_series
            p_atom = math.exp(log_pi0 - np.logaddexp(log_pi0, log_slab))
            if self.rng.random() < p_atom:
                theta = 1.0
            else:
                if self.thetas[c] > 1.0:
                    u0 = self.thetas[c] - 1.0
                    shape_post = base.shape + n_tot
                    rate_post = base.rate + s_tot

                    def logf(u, _n=n_tot, _s=s_tot):
                        if u <= 0.0:
                            return -math.inf
                        return (
                            _n * math.log1p(u)
                            - _s * u
                            + (base.shape - 1.0) * math.log(u)
                            - base.rate * u
                        )

                    width = shape_post / rate_post + 3.0 * math.sqrt(shape_post) / rate_post
                    u = _slice_positive(logf, u0, self.rng, width)
                else:
                    u = self._draw_slab(n_tot, s_tot)
                theta = 1.0 + (u if u > 0.0 else _THETA_NUDGE)
            self.thetas[c] = theta
            self.logthetas[c] = math.log(theta)

    def compact(self) -> None:
        """Drop empty slots and relabel clusters densely."""
        if not self.free:
            return
        keep = [c for c in range(len(self.thetas)) if self.sizes[c] > 0]
        remap = np.full(len(self.thetas), -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        self.assignment = remap[np.asarray(self.assignment)].tolist()
        self.thetas = [self.thetas[c] for c in keep]
        self.logthetas = [self.logthetas[c] for c in keep]
        self.sizes = [self.sizes[c] for c in keep]
        self.free = []

    def report(self, iteration: int) -> PosteriorState:
        """Merge atom clusters into reported cluster 0; sort the rest."""
        self.compact()
        thetas = np.array(self.thetas)
        cont = np.nonzero(thetas > 1.0)[0]
        order = cont[np.argsort(thetas[cont], kind="stable")]
        remap = np.zeros(len(thetas), dtype=np.int64)
        remap[order] = np.arange(1, order.size + 1)
        return PosteriorState(
            assignment=remap[np.asarray(self.assignment)],
            cluster_theta=(1.0, *thetas[order]),
            iteration=iteration,
        )


def run_mcmc(
    ds: Dataset,
    base: SpikedBaseMeasure,
    iters: int,
    burnin: int = 0,
    thin: int = 1,
    seed: int = 0,
) -> Iterator[PosteriorState]:
    """Polya-urn Gibbs sampler over gene effects.

    Each sweep reassigns every gene (existing cluster with weight
    proportional to size times likelihood, fresh draw with weight
    proportional to the concentration times the single-gene marginal),
    then resamples every cluster effect.  States after burn-in are emitted
    at the thinning interval; identical seeds yield identical streams.
    """
    if not iters > burnin >= 0:
        raise InputError(f"need iters > burnin >= 0, got iters={iters} burnin={burnin}")
    if thin < 1:
        raise InputError(f"thin must be >= 1, got {thin}")
    if ds.n_genes == 0:
        raise InputError("cannot sample over an empty dataset")
    totals = dataset_totals(ds)
    rng = generator(substream_seed(seed, "mcmc"))
    chain = _UrnChain(totals, base, rng)
    for t in range(1, iters + 1):
        chain.sweep_assignments()
        chain.sweep_cluster_effects()
        if t > burnin and (t - burnin) % thin == 0:
            yield chain.report(t)


def export_scenarios(
    states: Iterable[PosteriorState], ds: Dataset, seed: int = 0
) -> list[Scenario]:
    """One scenario per retained state; effects taken from cluster labels."""
    states = list(states)
    if not states:
        raise InputError("no posterior states to export")
    out = []
    for state in states:
        if state.assignment.shape[0] != ds.n_genes:
            raise InputError("posterior state does not match the dataset size")
        out.append(
            Scenario(
                theta=state.theta_vector(),
                origin=ScenarioOrigin(mcmc_iteration=state.iteration, seed=seed),
            )
        )
    return out


@dataclass(frozen=True)
class DriverCountSummary:
    mean: float
    quantiles: dict[str, float]


def posterior_driver_count(states: Iterable[PosteriorState]) -> DriverCountSummary:
    """Mean and quantiles of the number of drivers across states."""
    counts = np.array([s.n_drivers() for s in states], dtype=float)
    if counts.size == 0:
        raise InputError("empty posterior stream")
    qs = np.percentile(counts, [10, 25, 50, 75, 90])
    return DriverCountSummary(
        mean=float(counts.mean()),
        quantiles={
            "p10": float(qs[0]),
            "p25": float(qs[1]),
            "p50": float(qs[2]),
            "p75": float(qs[3]),
            "p90": float(qs[4]),
        },
    )


def state_diagnostics(
    state: PosteriorState, ds: Dataset, base: SpikedBaseMeasure
) -> tuple[int, int, float]:
    """(occupied clusters, drivers, unnormalized log posterior) for a state.

    The log posterior treats the reported clusters as urn clusters and
    drops state-independent constants; it is meant for trace monitoring.
    """
    totals = dataset_totals(ds)
    thetas = np.asarray(state.cluster_theta)
    occupied = np.unique(state.assignment)
    sizes = np.bincount(state.assignment, minlength=thetas.size)
    log_post = 0.0
    for c in occupied:
        log_post += math.log(base.total_mass) + gammaln(sizes[c])
        if c == 0:
            log_post += math.log(base.spike_fraction)
        else:
            u = thetas[c] - 1.0
            log_post += (
                math.log1p(-base.spike_fraction)
                + base.shape * math.log(base.rate)
                - float(gammaln(base.shape))
                + (base.shape - 1.0) * math.log(u)
                - base.rate * u
            )
    theta_g = state.theta_vector()
    log_post += float(np.sum(totals.n * np.log(theta_g) - theta_g * totals.s))
    return int(occupied.size), state.n_drivers(), float(log_post)
