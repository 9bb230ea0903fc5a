import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mutfdr.domain import InputError, MutationTypeTable, Scenario, ScenarioOrigin
from mutfdr.genmodel import dataset_totals, loglik_gene, mle_theta, simulate_dataset

from conftest import make_dataset, make_gene, random_template


class TestLoglik:
    def test_all_zero_counts_screened_out(self, rates_m3):
        g = make_gene("g", m=3, cov1=[1000, 2000, 500], cov2=[100, 100, 100])
        expected = -float(g.cov1 @ rates_m3.gamma1)
        assert loglik_gene(g, rates_m3, 1.0).value == pytest.approx(expected, abs=1e-12)

    def test_unit_case_exact(self):
        # one type, rate*coverage = 1 in both stages, one mutation in each:
        # two Poisson(1) pmfs at 1, log = -1 each.
        rates = MutationTypeTable(("t",), np.array([1e-3]), np.array([1e-3]))
        g = make_gene("g", cov1=1000, cov2=1000, x1=1, x2=1)
        assert loglik_gene(g, rates, 1.0).value == pytest.approx(-2.0, abs=1e-12)

    def test_zero_coverage_zero_counts(self, rates_m1):
        g = make_gene("g", cov1=0, cov2=0)
        assert loglik_gene(g, rates_m1, 1.0).value == 0.0

    def test_negative_theta_rejected(self, rates_m1):
        with pytest.raises(InputError, match=">= 0"):
            loglik_gene(make_gene("g"), rates_m1, -0.5)

    def test_value_never_positive(self, rates_m3):
        rng = np.random.default_rng(4)
        for _ in range(50):
            cov1 = rng.integers(0, 3000, size=3)
            cov2 = rng.integers(0, 3000, size=3)
            x1 = rng.binomial(1, 0.3, size=3) * rng.integers(0, 4, size=3)
            x1 = np.minimum(x1, cov1)
            x2 = np.zeros(3, dtype=np.int64)
            if x1.sum() > 0:
                x2 = np.minimum(rng.integers(0, 3, size=3), cov2)
            g = make_gene("g", m=3, cov1=cov1, cov2=cov2, x1=x1, x2=x2)
            theta = rng.uniform(0, 30)
            assert loglik_gene(g, rates_m3, theta).value <= 1e-12


class TestMle:
    def test_zero_counts_gives_zero(self, rates_m3):
        g = make_gene("g", m=3)
        assert mle_theta(g, rates_m3) == 0.0

    def test_closed_form_matches_grid_search(self):
        # one type, gamma1*cov1 = 1, gamma2*cov2 = 2, counts 2 and 4
        rates = MutationTypeTable(("t",), np.array([1e-3]), np.array([2e-3]))
        g = make_gene("g", cov1=1000, cov2=1000, x1=2, x2=4)
        theta_hat = mle_theta(g, rates)
        assert theta_hat == pytest.approx(2.0, abs=1e-12)
        grid = np.linspace(0.01, 10, 2000)
        values = [loglik_gene(g, rates, t).value for t in grid]
        assert grid[int(np.argmax(values))] == pytest.approx(2.0, abs=0.01)

    def test_counts_at_expectation(self):
        rates = MutationTypeTable(("t",), np.array([2e-3]), np.array([3e-3]))
        g = make_gene("g", cov1=1000, cov2=1000, x1=2, x2=3)
        assert mle_theta(g, rates) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_exposure(self, rates_m1):
        with pytest.raises(InputError, match="zero expected exposure"):
            mle_theta(make_gene("g", cov1=0, cov2=0), rates_m1)

    @given(
        cov1=st.integers(min_value=1, max_value=5000),
        cov2=st.integers(min_value=1, max_value=5000),
        x1=st.integers(min_value=0, max_value=6),
        x2=st.integers(min_value=0, max_value=6),
    )
    @settings(max_examples=60, deadline=None)
    def test_local_optimality(self, cov1, cov2, x1, x2):
        rates = MutationTypeTable(("t",), np.array([1e-3]), np.array([2e-3]))
        x1 = min(x1, cov1)
        x2 = 0 if x1 == 0 else min(x2, cov2)
        g = make_gene("g", cov1=cov1, cov2=cov2, x1=x1, x2=x2)
        theta_hat = mle_theta(g, rates)
        at_hat = loglik_gene(g, rates, theta_hat).value
        for factor in (0.99, 1.01):
            perturbed = theta_hat * factor
            assert at_hat >= loglik_gene(g, rates, perturbed).value - 1e-12


class TestSimulate:
    def test_zero_coverage_means_zero_counts(self, rates_m1):
        template = make_dataset(rates_m1, [make_gene(f"g{i}", cov1=0, cov2=0) for i in range(5)])
        scn = Scenario(np.ones(5), ScenarioOrigin(0, 0))
        ds = simulate_dataset(scn, template, seed=1)
        assert all(g.x1.sum() == 0 and g.x2.sum() == 0 for g in ds.genes)

    def test_same_seed_same_output(self, small_template):
        theta = np.ones(small_template.n_genes)
        theta[:4] = 9.0
        scn = Scenario(theta, ScenarioOrigin(0, 0))
        assert simulate_dataset(scn, small_template, 7) == simulate_dataset(
            scn, small_template, 7
        )
        assert simulate_dataset(scn, small_template, 7) != simulate_dataset(
            scn, small_template, 8
        )

    def test_gene_draws_order_independent(self, rates_m3, small_template):
        scn = Scenario(np.ones(small_template.n_genes), ScenarioOrigin(0, 0))
        ds = simulate_dataset(scn, small_template, seed=13)
        reversed_template = make_dataset(rates_m3, list(small_template.genes[::-1]))
        ds_rev = simulate_dataset(scn, reversed_template, seed=13)
        by_id = {g.gene_id: g for g in ds_rev.genes}
        assert all(by_id[g.gene_id] == g for g in ds.genes)

    def test_length_mismatch(self, small_template):
        scn = Scenario(np.ones(3), ScenarioOrigin(0, 0))
        with pytest.raises(InputError, match="effects"):
            simulate_dataset(scn, small_template, 0)

    def test_screening_invariant_on_random_scenarios(self, small_template):
        rng = np.random.default_rng(5)
        for rep in range(50):
            theta = np.where(rng.random(small_template.n_genes) < 0.1,
                             1.0 + rng.gamma(1.5, 8.0, small_template.n_genes), 1.0)
            scn = Scenario(theta, ScenarioOrigin(rep, 0))
            ds = simulate_dataset(scn, small_template, seed=rep)
            for g in ds.genes:
                assert not (g.x1.sum() == 0 and g.x2.sum() != 0)

    def test_mutation_probability_matches_closed_form(self, rates_m1):
        # single gene, gamma1*cov1 = 0.04: P(any stage-1 mutation) = 1 - exp(-0.04)
        template = make_dataset(rates_m1, [make_gene("g", cov1=40, cov2=0)])
        scn = Scenario(np.ones(1), ScenarioOrigin(0, 0))
        n = 100_000
        hits = sum(
            1
            for s in range(n)
            if simulate_dataset(scn, template, seed=s).genes[0].screened_in
        )
        p = 1.0 - math.exp(-0.04)
        se = math.sqrt(p * (1 - p) / n)
        assert abs(hits / n - p) < 3 * se

    def test_conditional_expectation(self, rates_m3):
        template = random_template(rates_m3, 200, seed=21)
        theta_val = 4.0
        scn = Scenario(np.full(200, theta_val), ScenarioOrigin(0, 0))
        totals = dataset_totals(template)
        expected = theta_val * totals.s1
        reps = 200
        sums = np.zeros(200)
        sq = np.zeros(200)
        for r in range(reps):
            ds = simulate_dataset(scn, template, seed=1000 + r)
            n1 = np.array([g.x1.sum() for g in ds.genes], dtype=float)
            sums += n1
            sq += n1**2
        mean = sums / reps
        sd = np.sqrt(np.maximum(sq / reps - mean**2, 1e-12) / reps)
        cover = np.abs(mean - expected) <= 3 * sd + 1e-9
        # a few 3-sigma misses among 200 genes are expected by chance
        assert cover.mean() > 0.97

    def test_clamping_recorded_and_valid(self):
        # absurd effect forces draws past the tiny coverage
        rates = MutationTypeTable(("t",), np.array([0.5]), np.array([0.5]))
        template = make_dataset(rates, [make_gene("g", cov1=2, cov2=2)])
        scn = Scenario(np.array([1e4]), ScenarioOrigin(0, 0))
        ds = simulate_dataset(scn, template, seed=3)
        g = ds.genes[0]
        assert g.x1[0] <= 2 and g.x2[0] <= 2
        assert "clamped=" in ds.meta.description
        assert not ds.meta.description.endswith("clamped=0")

    def test_poisson_binomial_total_variation(self):
        # small gamma*T: the Poisson collapse is close to the binomial model
        rng = np.random.default_rng(99)
        t, gamma = 1000, 1e-4  # gamma*T = 0.1
        n = 100_000
        pois = rng.poisson(gamma * t, size=n)
        binom = rng.binomial(t, gamma, size=n)
        hi = max(pois.max(), binom.max()) + 1
        p = np.bincount(pois, minlength=hi) / n
        q = np.bincount(binom, minlength=hi) / n
        tv = 0.5 * np.abs(p - q).sum()
        assert tv <= 0.01
