import math

import numpy as np
import pytest
from scipy import stats as sps

from rcmlab.branching import (
    BranchingRun,
    GenerationSchedule,
    dominance_test,
    domination_suite,
    gw_poisson,
    gw_poisson_batch,
    lambda_monotonicity_check,
    spatial_branching,
    spatial_branching_batch,
)
from rcmlab.explorer import explore_stats
from rcmlab.models import GilbertModel, MarkDistribution

GILBERT = GilbertModel(2, MarkDistribution.degenerate(0.5))

# Total-progeny law of GW with Poisson(1/2) offspring, frozen from the
# convolution DP oracle (cross-checked against e^{-mu n}(mu n)^{n-1}/n!).
BOREL_HALF = {
    1: 0.606530659712633,
    2: 0.183939720585721,
    3: 0.083673810055661,
    4: 0.045111761078871,
    5: 0.026720377156217,
    6: 0.016803135574154,
    7: 0.011014049982181,
    8: 0.007442545326216,
    9: 0.005147684351702,
    10: 0.003626557741564,
}


class TestGwPoisson:
    def test_mean_zero_total_one(self, gen):
        run = gw_poisson(0.0, 100, gen(170))
        assert run.total == 1
        assert run.extinct

    def test_cumulative_mean_geometric(self, gen):
        # E W_{<=2} = 1 + mu + mu^2 = 1.75 at mu = 1/2, within 4 sigma
        counts, _, _ = gw_poisson_batch(0.5, 100_000, 2, gen(171))
        w_le2 = counts.sum(axis=1)
        se = w_le2.std(ddof=1) / math.sqrt(w_le2.size)
        assert abs(w_le2.mean() - 1.75) <= 4 * se

    def test_total_progeny_borel_chi2(self, gen):
        _, totals, extinct = gw_poisson_batch(0.5, 100_000, 2, gen(172))
        assert extinct.all()
        kmax = max(BOREL_HALF)
        obs = np.array([np.sum(totals == n) for n in range(1, kmax + 1)]
                       + [np.sum(totals > kmax)])
        probs = np.array([BOREL_HALF[n] for n in range(1, kmax + 1)]
                         + [1.0 - sum(BOREL_HALF.values())])
        stat, pval = sps.chisquare(obs, probs * obs.sum())
        assert pval > 0.01

    def test_extinction_probability_subcritical(self, gen):
        _, _, extinct = gw_poisson_batch(0.6, 20_000, 3, gen(173))
        assert extinct.mean() > 0.99


class TestSpatialBranching:
    def test_t_zero_totals_one(self, gen):
        run = spatial_branching(GILBERT, 0.0, 0.5, GenerationSchedule.constant(2),
                                rng=gen(174))
        assert run.total == 1 and run.tilde_total == 1
        assert run.extinct

    def test_h_one_tilde_identical_pathwise(self, gen):
        # for h == 1, W~ and W coincide by construction: same arrays
        b = spatial_branching_batch(GILBERT, 0.8 / math.pi, 0.5, 1, 2000, 3, gen(175))
        assert np.array_equal(b.levels, b.tilde_levels)
        assert np.array_equal(b.total, b.tilde_total)

    def test_w1_level_mean_bounded_by_gw(self, gen):
        # E|W^{v,1}_n| <= (t D*_phi)^n within 4 sigma
        t = 0.5 / math.pi
        b = spatial_branching_batch(GILBERT, t, 0.5, 1, 40_000, 2, gen(176))
        lvl2 = b.levels[:, 2]
        se = lvl2.std(ddof=1) / math.sqrt(lvl2.size)
        assert lvl2.mean() <= 0.25 + 4 * se

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            GenerationSchedule.constant(0)
        s = GenerationSchedule(h=lambda m: 2 if m > 0.3 else 1, h_star=2)
        assert s.depth(0.5) == 2 and s.depth(0.1) == 1

    def test_mark_dependent_schedule_runs(self, gen):
        g = GilbertModel(2, MarkDistribution.uniform01())
        s = GenerationSchedule(h=lambda m: 2 if m > 0.5 else 1, h_star=2)
        run = spatial_branching(g, 0.05, 0.7, s, rng=gen(177))
        assert run.total >= 1
        assert run.tilde_total >= run.total or run.extinct

    def test_subcritical_tilde_mean_bound(self, gen):
        # Theorem bound: E|W~^{v,n}| <= c*_{<=n}(t) / (1 - c*_n(t)), 4 sigma
        t = 0.5 / math.pi
        n = 2
        rng = gen(178)
        b = spatial_branching_batch(GILBERT, t, 0.5, n, 30_000, 2, rng)
        est = explore_stats(GILBERT, t, np.full(30_000, 0.5), None, rng, record_k=n + 1)
        c_n = est.gen_sizes[:, n].mean()
        c_le = est.cumulative_sizes(n).mean()
        bound = c_le / (1.0 - c_n)
        m = b.tilde_total.mean()
        se = b.tilde_total.std(ddof=1) / math.sqrt(b.tilde_total.size)
        assert m <= bound + 4 * se


class TestDominanceTest:
    def test_identical_samples_consistent(self, gen):
        x = gen(179).poisson(2.0, 5000)
        v = dominance_test(x, x, 1e-3)
        assert v.consistent
        assert v.max_gap == 0.0

    def test_wrong_order_violated(self, gen):
        rng = gen(180)
        a = rng.poisson(0.6, 100_000)
        b = rng.poisson(0.5, 100_000)
        v = dominance_test(a, b, 1e-3, name="Poi(0.6) <=st Poi(0.5)")
        assert not v.consistent

    def test_degenerate_zero_consistent(self, gen):
        a = np.zeros(1000)
        b = gen(181).poisson(1.0, 1000)
        assert dominance_test(a, b, 1e-3).consistent

    def test_never_flags_equal_laws(self, gen):
        # fail-safe calibration: equal-law inputs at level 0.1%
        rng = gen(182)
        hits = 0
        for _ in range(200):
            a = rng.poisson(1.0, 400)
            b = rng.poisson(1.0, 400)
            hits += not dominance_test(a, b, 1e-3).consistent
        assert hits == 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            dominance_test([], [1.0], 1e-3)


class TestDominationSuite:
    def test_t_zero_all_degenerate(self, gen):
        rep = domination_suite(GILBERT, 0.0, 0.5, 2, 2, 500, gen(183))
        assert rep.all_consistent
        for v in rep.verdicts:
            assert v.max_gap == 0.0

    def test_gilbert_subcritical_consistent(self, gen):
        rep = domination_suite(GILBERT, 0.5 / math.pi, 0.5, 2, 2, 20_000, gen(184))
        assert rep.all_consistent, str(rep)
        assert len(rep.verdicts) == 5

    def test_swapped_pair_violated(self, gen):
        # sanity: the reversed ordering W_n vs |V_n| is detectable at t > 0
        rng = gen(185)
        t = 0.8 / math.pi
        v_batch = explore_stats(GILBERT, t, np.full(60_000, 0.5), None, rng, record_k=3)
        gw_counts, _, _ = gw_poisson_batch(0.8, 60_000, 2, rng)
        v = dominance_test(gw_counts[:, 2], v_batch.gen_sizes[:, 2], 1e-3,
                           name="W_2 <=st |V_2| (wrong)")
        assert not v.consistent

    def test_supercritical_refused(self, gen):
        with pytest.raises(ValueError, match="subcritical"):
            domination_suite(GILBERT, 0.5, 0.5, 2, 2, 100, gen(186))


class TestLambdaMonotonicity:
    def test_equal_t_consistent(self, gen):
        v = lambda_monotonicity_check(GILBERT, 0.1, 0.1, 1, 0.5, 5000, gen(187))
        assert v.consistent

    def test_m1_poisson_ordering(self, gen):
        v = lambda_monotonicity_check(GILBERT, 0.05, 0.2, 1, 0.5, 20_000, gen(188))
        assert v.consistent

    def test_m2_desk_run(self, gen):
        v = lambda_monotonicity_check(GILBERT, 0.05, 0.15, 2, 0.5, 20_000, gen(189))
        assert v.consistent

    def test_m3_refused(self, gen):
        with pytest.raises(ValueError, match="open question"):
            lambda_monotonicity_check(GILBERT, 0.05, 0.1, 3, 0.5, 100, gen(190))
