"""Independent brute-force oracles used to pin expected values.

Everything here is deliberately naive (enumeration, quadrature, exhaustive
partition sums) and shares no code with the implementation paths it checks.
"""

import itertools
import math

import numpy as np
from scipy import integrate
from scipy.stats import poisson


def two_stage_tail_enum(n_obs, lam1, lam2, k_max=80):
    """P(N1 + 1{N1>0} N2 >= n_obs) by direct enumeration over (N1, N2).

    ``k_max`` = 80 leaves Poisson mass far below 1e-18 for means <= 2.
    """
    p1 = poisson.pmf(np.arange(k_max + 1), lam1)
    p2 = poisson.pmf(np.arange(k_max + 1), lam2)
    total = 0.0
    for k1 in range(k_max + 1):
        if k1 == 0:
            if k1 >= n_obs:
                total += p1[0]
            continue
        for k2 in range(k_max + 1):
            if k1 + k2 >= n_obs:
                total += p1[k1] * p2[k2]
    return total


def gene_loglik_linear(x1, cov1, x2, cov2, gamma1, gamma2, theta):
    """Two-stage Poisson likelihood of one gene, evaluated in linear space."""
    lik = float(np.prod(poisson.pmf(x1, gamma1 * theta * np.asarray(cov1, float))))
    if np.sum(x1) > 0:
        lik *= float(np.prod(poisson.pmf(x2, gamma2 * theta * np.asarray(cov2, float))))
    elif np.sum(x2) > 0:
        return 0.0
    return lik


def marginal_quadrature(gene_tuples, gamma1, gamma2, spike_fraction, shape, rate):
    """Integral of a likelihood product against the spike + shifted gamma.

    The continuous piece substitutes v = u**shape to tame the u**(shape-1)
    singularity at 0, then integrates adaptively.
    """

    def product(theta):
        out = 1.0
        for x1, cov1, x2, cov2 in gene_tuples:
            out *= gene_loglik_linear(x1, cov1, x2, cov2, gamma1, gamma2, theta)
        return out

    spike = spike_fraction * product(1.0)

    def integrand(v):
        u = v ** (1.0 / shape)
        # gamma density times du/dv, with the u**(shape-1) factor absorbed
        dens = rate**shape / math.gamma(shape) * math.exp(-rate * u) / shape
        return product(1.0 + u) * dens

    cont, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
    return spike + (1.0 - spike_fraction) * cont


def _crp_partitions(n):
    """All set partitions of range(n) as tuples of sorted tuples."""
    if n == 1:
        return [((0,),)]
    smaller = _crp_partitions(n - 1)
    out = []
    for part in smaller:
        for i, block in enumerate(part):
            out.append(tuple(part[:i] + (tuple(sorted(block + (n - 1,))),) + part[i + 1:]))
        out.append(tuple(part + ((n - 1,),)))
    return out


def reported_partition_distribution(s_list, total_mass, spike_fraction, shape, rate):
    """Exact distribution of the reported cluster partition for zero-count genes.

    Every gene has zero mutations, so its likelihood at effect theta is
    exp(-theta * s_g).  For each cluster partition the posterior weight is
    the urn prior factor times the product of per-block marginals; blocks
    then independently sit on the atom (effect exactly 1) or the slab, and
    all atom blocks merge in the reported partition.  Returns a dict
    mapping reported partitions (tuples of sorted tuples of gene indices)
    to probabilities, plus per-gene atom membership probabilities.
    """
    n = len(s_list)
    s_arr = np.asarray(s_list, float)

    def block_marginal(block):
        s = float(s_arr[list(block)].sum())
        slab = math.exp(-s) * (rate / (rate + s)) ** shape
        return spike_fraction * math.exp(-s) + (1.0 - spike_fraction) * slab

    def block_atom_prob(block):
        s = float(s_arr[list(block)].sum())
        spike = spike_fraction * math.exp(-s)
        return spike / block_marginal(block)

    weights = {}
    for part in _crp_partitions(n):
        k = len(part)
        prior = total_mass ** (k - 1) * np.prod([math.factorial(len(b) - 1) for b in part])
        weights[part] = prior * np.prod([block_marginal(b) for b in part])
    z = sum(weights.values())

    reported = {}
    atom_marginal = np.zeros(n)
    for part, w in weights.items():
        post = w / z
        probs = [block_atom_prob(b) for b in part]
        for config in itertools.product([0, 1], repeat=len(part)):
            p_cfg = post * np.prod(
                [q if z_c else 1 - q for q, z_c in zip(probs, config)]
            )
            merged = []
            atom_genes = []
            for block, z_c in zip(part, config):
                if z_c:
                    atom_genes.extend(block)
                else:
                    merged.append(tuple(sorted(block)))
            if atom_genes:
                merged.append(tuple(sorted(atom_genes)))
                for g in atom_genes:
                    atom_marginal[g] += p_cfg
            key = tuple(sorted(merged))
            reported[key] = reported.get(key, 0.0) + p_cfg
    return reported, atom_marginal


def batch_means_se(indicator, n_batches=100):
    """Monte Carlo standard error of a correlated 0/1 sequence."""
    x = np.asarray(indicator, float)
    size = (len(x) // n_batches) * n_batches
    batches = x[:size].reshape(n_batches, -1).mean(axis=1)
    return float(batches.std(ddof=1) / math.sqrt(n_batches))
