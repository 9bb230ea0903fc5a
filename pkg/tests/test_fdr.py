import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mutfdr.domain import InputError
from mutfdr.fdr import bh_select, eb_select, load_selection, save_selection, storey_select


def pairs(pvals):
    return [(f"g{i:04d}", p) for i, p in enumerate(pvals)]


def brute_force_bh(pvals, alpha):
    """Try every order statistic as the cutoff; keep the largest valid one."""
    p = np.sort(np.asarray(pvals))
    g = len(p)
    threshold = 0.0
    for i in range(g):
        if p[i] < alpha * (i + 1) / g:
            threshold = max(threshold, p[i])
    return {i for i, v in enumerate(pvals) if v <= threshold}


class TestBh:
    def test_hand_case(self):
        res = bh_select(pairs([0.01, 0.02, 0.5, 0.9]), 0.1)
        assert res.rejected == {"g0000", "g0001"}
        assert res.threshold == 0.02

    def test_all_ones_reject_none(self):
        res = bh_select(pairs([1.0] * 5), 0.1)
        assert res.rejected == frozenset()
        assert res.threshold == 0.0

    def test_empty_input(self):
        res = bh_select([], 0.1)
        assert res.rejected == frozenset() and res.threshold == 0.0

    def test_invalid_pvalue(self):
        with pytest.raises(InputError, match="p-value"):
            bh_select(pairs([0.0]), 0.1)
        with pytest.raises(InputError, match="alpha"):
            bh_select(pairs([0.5]), 1.5)

    def test_against_brute_force(self):
        rng = np.random.default_rng(12)
        for _ in range(10_000):
            g = rng.integers(1, 13)
            pv = np.round(rng.random(g), 3)
            pv = np.maximum(pv, 1e-3)
            alpha = float(rng.uniform(0.02, 0.5))
            res = bh_select(pairs(pv), alpha)
            want = {f"g{i:04d}" for i in brute_force_bh(pv, alpha)}
            assert res.rejected == want

    def test_duplicating_extreme_p_keeps_rejections(self):
        base = [0.001, 0.02, 0.4, 0.9]
        res = bh_select(pairs(base), 0.1)
        assert "g0000" in res.rejected
        res2 = bh_select(pairs(base + [0.001]), 0.1)
        assert res.rejected <= res2.rejected

    @given(st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=1, max_size=40))
    @settings(max_examples=80, deadline=None)
    def test_permutation_invariance(self, pvals):
        rng = np.random.default_rng(0)
        perm = rng.permutation(len(pvals))
        ids = [f"g{i:04d}" for i in range(len(pvals))]
        a = bh_select(list(zip(ids, pvals)), 0.15)
        b = bh_select([(ids[i], pvals[i]) for i in perm], 0.15)
        assert a.rejected == b.rejected and a.threshold == b.threshold


class TestStorey:
    def test_uniform_p0_near_one(self):
        rng = np.random.default_rng(5)
        pv = rng.random(10_000)
        res = storey_select(pairs(pv), 0.1, lambda_=0.5)
        assert abs(res.p0_hat - 1.0) < 0.03

    def test_all_above_lambda_caps_and_matches_bh(self):
        pv = [0.7, 0.8, 0.9, 0.95]
        res = storey_select(pairs(pv), 0.1, lambda_=0.5)
        assert res.p0_hat == 1.0
        assert res.rejected == bh_select(pairs(pv), 0.1).rejected

    def test_mixture_estimates_p0_and_rejects_more(self):
        rng = np.random.default_rng(6)
        null = rng.random(5000)
        alt = rng.random(5000) * 1e-6
        pv = np.concatenate([null, alt])
        res = storey_select(pairs(pv), 0.1, lambda_=0.5)
        assert res.p0_hat == pytest.approx(0.5, abs=0.03)
        bh = bh_select(pairs(pv), 0.1)
        assert len(res.rejected) > len(bh.rejected)

    def test_contains_bh_rejections(self):
        rng = np.random.default_rng(7)
        for trial in range(200):
            pv = np.maximum(rng.random(rng.integers(2, 30)) ** 2, 1e-9)
            s = storey_select(pairs(pv), 0.2, lambda_=0.4)
            b = bh_select(pairs(pv), 0.2)
            assert b.rejected <= s.rejected

    def test_zero_p0_rejects_all(self):
        pv = [0.01, 0.02, 0.03]
        res = storey_select(pairs(pv), 0.1, lambda_=0.5)
        assert res.p0_hat == 0.0
        assert res.rejected == {"g0000", "g0001", "g0002"}

    def test_lambda_validation(self):
        with pytest.raises(InputError, match="lambda"):
            storey_select(pairs([0.5]), 0.1, lambda_=1.0)


class TestEb:
    def test_complete_separation_rejects_all(self):
        rng = np.random.default_rng(8)
        null = rng.normal(0, 1, 20_000)
        obs = rng.normal(12, 0.5, 300)
        res = eb_select(pairs(obs), null, 0.1, higher_is_extreme=True)
        assert len(res.rejected) == 300
        assert res.p0_hat == 0.0

    def test_pure_null_rejects_none(self):
        rng = np.random.default_rng(9)
        null = rng.normal(0, 1, 50_000)
        obs = rng.normal(0, 1, 2000)
        res = eb_select(pairs(obs), null, 0.1, higher_is_extreme=True)
        assert len(res.rejected) == 0

    def test_two_groups_p0_calibration_smoke(self):
        rng = np.random.default_rng(10)
        hits = 0
        for rep in range(10):
            null = rng.normal(0, 1, 40_000)
            obs = np.concatenate(
                [rng.normal(0, 1, 1800), rng.normal(6, 1, 200)]
            )
            res = eb_select(pairs(obs), null, 0.1, higher_is_extreme=True)
            hits += 0.85 <= res.p0_hat <= 0.95
        assert hits >= 8

    def test_lower_orientation(self):
        rng = np.random.default_rng(11)
        null = rng.random(30_000)
        obs = np.concatenate([rng.random(900), rng.random(100) * 1e-4])
        res = eb_select(pairs(obs), null, 0.1, higher_is_extreme=False)
        extreme = {f"g{i:04d}" for i in range(900, 1000)}
        assert extreme <= res.rejected | extreme  # rejected set is a tail set
        if res.rejected:
            cut = res.threshold
            assert all(obs[int(g[1:])] <= cut for g in res.rejected)

    def test_minus_inf_never_rejected(self):
        rng = np.random.default_rng(12)
        null = np.concatenate([rng.normal(0, 1, 5000), [-np.inf] * 500])
        obs = np.concatenate([rng.normal(8, 1, 100), [-np.inf] * 50])
        res = eb_select(pairs(obs), null, 0.2, higher_is_extreme=True)
        inf_ids = {f"g{i:04d}" for i in range(100, 150)}
        assert not (res.rejected & inf_ids)

    def test_empty_null(self):
        with pytest.raises(InputError, match="null"):
            eb_select(pairs([1.0]), np.array([]), 0.1)

    def test_estimated_fdr_of_returned_region(self):
        # the reported region's estimate must sit at or below alpha
        rng = np.random.default_rng(13)
        null = rng.normal(0, 1, 30_000)
        obs = np.concatenate([rng.normal(0, 1, 1500), rng.normal(4, 1, 500)])
        res = eb_select(pairs(obs), null, 0.15, higher_is_extreme=True)
        assert res.rejected
        tail_f = np.mean(obs >= res.threshold)
        tail_f0 = np.mean(null >= res.threshold)
        assert res.p0_hat * tail_f0 / tail_f <= 0.15 + 1e-9


class TestAllMethods:
    def test_permutation_invariance(self):
        rng = np.random.default_rng(14)
        pv = np.maximum(rng.random(200) ** 3, 1e-9)
        ids = [f"g{i:04d}" for i in range(200)]
        null = rng.random(10_000)
        perm = rng.permutation(200)
        for select in (
            lambda prs: bh_select(prs, 0.1),
            lambda prs: storey_select(prs, 0.1),
            lambda prs: eb_select(prs, null, 0.1, higher_is_extreme=False),
        ):
            a = select(list(zip(ids, pv)))
            b = select([(ids[i], pv[i]) for i in perm])
            assert a.rejected == b.rejected


class TestSelectionIO:
    def test_round_trip(self, tmp_path):
        res = storey_select(pairs([0.001, 0.5, 0.9]), 0.1)
        f = tmp_path / "sel.csv"
        save_selection(res, [f"g{i:04d}" for i in range(3)], f)
        loaded = load_selection(f)
        assert loaded == res
