import math

import numpy as np
import pytest
from scipy import integrate, stats as sps

from rcmlab.models import (
    GilbertModel,
    MarkDistribution,
    MarkSupportError,
    ModelSupportError,
    UnmarkedCustomModel,
    UnmarkedIndicatorModel,
    WeightedModel,
    degree_functional,
    phi,
    sample_displacement,
    tail_mass,
    unit_ball_volume,
    validate_connection_model,
)

GILBERT = GilbertModel(2, MarkDistribution.degenerate(0.5))
WEIGHTED = WeightedModel(2, epsilon=0.5)


class TestPhi:
    def test_gilbert_inside(self):
        assert phi(GILBERT, (0.3, 0.0), 0.5, 0.5) == 1.0
        g = GilbertModel(2, MarkDistribution.uniform01())
        assert phi(g, (0.3, 0.0), 0.2, 0.2) == 1.0

    def test_gilbert_outside(self):
        g = GilbertModel(2, MarkDistribution.uniform01())
        assert phi(g, (0.5, 0.0), 0.2, 0.2) == 0.0

    def test_weighted_direct_substitution(self):
        # g = (p v q)^eps = 0.5, ||x||^2 = 1.44, g*||x||^d = 0.72 <= 1
        assert phi(WEIGHTED, (1.2, 0.0), 0.25, 0.04) == 1.0
        assert phi(WEIGHTED, (1.5, 0.0), 0.25, 0.04) == 0.0

    def test_mark_domain_error(self):
        with pytest.raises(MarkSupportError):
            phi(WEIGHTED, (0.1, 0.0), 1.5, 0.5)
        with pytest.raises(MarkSupportError):
            phi(GILBERT, (0.1, 0.0), 0.4, 0.5)

    def test_symmetry_on_random_triples(self, gen):
        rng = gen(31)
        for model in (GILBERT, WEIGHTED, GilbertModel(3, MarkDistribution.uniform01())):
            p = model.mark_dist.sample(200, rng)
            q = model.mark_dist.sample(200, rng)
            dx = rng.standard_normal((200, model.dim))
            assert np.array_equal(model.phi(dx, p, q), model.phi(-dx, q, p))

    def test_gilbert_monotone_in_marks(self, gen):
        rng = gen(32)
        g = GilbertModel(2, MarkDistribution.uniform01())
        p, q = rng.random(100), rng.random(100)
        dx = rng.standard_normal((100, 2)) * 0.5
        lo = g.phi(dx, p, q)
        hi = g.phi(dx, np.minimum(p * 1.5, 1.0), q)
        assert np.all(hi >= lo)


class TestDegreeFunctional:
    def test_gilbert_closed_form_pi(self, gen):
        est = degree_functional(GILBERT, 0.5, 10, gen(33))
        assert est.method == "closed_form"
        assert est.value == pytest.approx(math.pi)
        assert est.std_error == 0.0

    def test_intensity_free(self, gen):
        # the definition involves lambda only; there is no t anywhere in the API
        e1 = degree_functional(GILBERT, 0.5, 100, gen(34))
        e2 = degree_functional(GILBERT, 0.5, 100, gen(35))
        assert e1.value == e2.value

    def test_weighted_max_kernel_analytic_and_mc_oracle(self, gen):
        # analytic: kappa_2 * int (p v q)^(-1/2) dq at p=0.25 -> pi*(0.5+2*(1-0.5)) = 1.5*pi
        est = degree_functional(WEIGHTED, 0.25, 10, gen(36))
        assert est.value == pytest.approx(1.5 * math.pi, rel=1e-12)
        # independent MC oracle: sample q ~ U(0,1), x uniform in a covering disk
        rng = gen(37)
        n = 10**6
        rmax = 0.25 ** -0.125 * 1.2  # covers every pair radius (p v q)^(-eps/d), q >= small
        rmax = 1.6
        q = rng.random(n)
        xs = rng.random((n, 2)) * 2 * rmax - rmax
        inside = np.linalg.norm(xs, axis=1) <= rmax
        vals = np.zeros(n)
        vals[inside] = WEIGHTED.phi(xs[inside], np.full(inside.sum(), 0.25), q[inside])
        area = (2 * rmax) ** 2
        mc = vals.mean() * area
        se = vals.std(ddof=1) / math.sqrt(n) * area
        assert abs(mc - est.value) <= 3 * se

    def test_refuses_untruncatable_model(self, gen):
        radii = MarkDistribution.custom(lambda n, r: r.exponential(0.5, n), support_bound=None)
        g = GilbertModel(2, radii)
        assert g.t_T_trivial
        with pytest.raises(ModelSupportError):
            degree_functional(g, 0.5, 100, gen(38))

    def test_mc_path_for_bounded_custom(self, gen):
        # custom sampler that is really U(0,1): MC estimate near the closed uniform value
        radii = MarkDistribution.custom(lambda n, r: r.random(n), support_bound=1.0)
        g = GilbertModel(2, radii)
        est = degree_functional(g, 0.25, 200_000, gen(39))
        ref = GilbertModel(2, MarkDistribution.uniform01()).degree(np.asarray([0.25]))[0]
        assert est.method == "mc"
        assert abs(est.value - ref) <= 4 * est.std_error


class TestSampleDisplacement:
    def test_mean_norm_uniform_ball(self, gen):
        # uniform in the unit ball: E||x|| = d/(d+1)
        rng = gen(40)
        x = GILBERT.sample_displacement(np.full(10**5, 0.5), np.full(10**5, 0.5), rng)
        r = np.linalg.norm(x, axis=1)
        se = r.std(ddof=1) / math.sqrt(r.size)
        assert abs(r.mean() - 2.0 / 3.0) <= 3 * se

    def test_support(self, gen):
        rng = gen(41)
        for model in (GILBERT, WEIGHTED):
            p = model.mark_dist.sample(5000, rng)
            q = model.mark_dist.sample(5000, rng)
            x = model.sample_displacement(p, q, rng)
            assert np.all(model.phi(x, p, q) > 0)

    def test_direction_uniformity_chi2(self, gen):
        # standard goodness-of-fit oracle on angular bins, 1% level
        rng = gen(42)
        x = GILBERT.sample_displacement(np.full(10**5, 0.5), np.full(10**5, 0.5), rng)
        ang = np.arctan2(x[:, 1], x[:, 0])
        counts, _ = np.histogram(ang, bins=24, range=(-math.pi, math.pi))
        stat, pval = sps.chisquare(counts)
        assert pval > 0.01

    def test_radial_density_chi2(self, gen):
        # radial density prop. to r^(d-1) inside the ball
        rng = gen(43)
        x = GILBERT.sample_displacement(np.full(10**5, 0.5), np.full(10**5, 0.5), rng)
        r = np.linalg.norm(x, axis=1)
        edges = np.linspace(0, 1, 16)
        counts, _ = np.histogram(r, bins=edges)
        expected = np.diff(edges**2)  # d=2
        stat, pval = sps.chisquare(counts, expected * counts.sum())
        assert pval > 0.01

    def test_no_mass_error(self, gen):
        w = WeightedModel(2, epsilon=0.5)
        with pytest.raises(ModelSupportError):
            w.sample_displacement(np.array([np.nan]), np.array([0.5]), gen(44))


class TestChildMarks:
    def test_gilbert_uniform01_density_chi2(self, gen):
        # density prop. to (p+q)^2 on (0,1) at p=0.3
        rng = gen(45)
        p = np.full(10**5, 0.3)
        q = GilbertModel(2, MarkDistribution.uniform01()).sample_child_marks(p, rng)
        edges = np.linspace(0, 1, 21)
        counts, _ = np.histogram(q, bins=edges)
        cdf = (0.3 + edges) ** 3
        stat, pval = sps.chisquare(counts, np.diff(cdf) / (cdf[-1] - cdf[0]) * counts.sum())
        assert pval > 0.01

    def test_weighted_max_density_chi2(self, gen):
        # density prop. to (p v q)^(-1/2) at p=0.25: flat below p, power above
        rng = gen(46)
        p0 = 0.25
        q = WEIGHTED.sample_child_marks(np.full(10**5, p0), rng)
        edges = np.linspace(0, 1, 21)
        counts, _ = np.histogram(q, bins=edges)
        dens = lambda s: np.where(s <= p0, p0**-0.5, s**-0.5)
        expected = np.array([integrate.quad(dens, a, b)[0] for a, b in zip(edges, edges[1:])])
        stat, pval = sps.chisquare(counts, expected / expected.sum() * counts.sum())
        assert pval > 0.01

    def test_pref_kernel_masses(self, gen):
        # exact sampler for the preferential-attachment kernel (no finiteness claim)
        rng = gen(47)
        m = WeightedModel(2, epsilon=0.4, delta=0.3, kernel="pref")
        p0 = 0.4
        q = m.sample_child_marks(np.full(200_000, p0), rng)
        dens = lambda s: np.where(s <= p0, s**0.3 * p0**-0.4, p0**0.3 * s**-0.4)
        edges = np.linspace(0, 1, 21)
        counts, _ = np.histogram(q, bins=edges)
        expected = np.array([integrate.quad(dens, a, b)[0] for a, b in zip(edges, edges[1:])])
        stat, pval = sps.chisquare(counts, expected / expected.sum() * counts.sum())
        assert pval > 0.01

    def test_sum_kernel_degree_matches_quadrature(self):
        m = WeightedModel(2, epsilon=0.5, kernel="sum")
        val = m.degree(np.asarray([0.3]))[0]
        want = math.pi * integrate.quad(lambda q: (0.3 + q) ** -0.5, 0, 1)[0]
        assert val == pytest.approx(want, rel=1e-10)


class TestOffspring:
    def test_thinning_path_matches_closed_path(self, gen):
        # bounded_custom uniform radii must reproduce the uniform01 closed path law
        rng = gen(48)
        closed = GilbertModel(2, MarkDistribution.uniform01())
        thin = GilbertModel(2, MarkDistribution.custom(lambda n, r: r.random(n), 1.0))
        p = np.full(4000, 0.5)
        t = 0.15
        par_c, q_c, _ = closed.sample_offspring(p, t, rng)
        par_t, q_t, _ = thin.sample_offspring(p, t, rng)
        # counts are Poisson(t*D(p)) in both cases
        n_c = np.bincount(par_c, minlength=p.size)
        n_t = np.bincount(par_t, minlength=p.size)
        assert abs(n_c.mean() - n_t.mean()) <= 4 * math.hypot(
            n_c.std(ddof=1), n_t.std(ddof=1)) / math.sqrt(p.size)
        ks = sps.ks_2samp(q_c, q_t)
        assert ks.pvalue > 0.01


class TestTailMass:
    def test_bounded_support_zero(self, gen):
        assert tail_mass(GILBERT, 0.5, 1.0, 10, gen(49)).value == 0.0

    def test_r_zero_equals_degree(self, gen):
        est = tail_mass(GILBERT, 0.5, 0.0, 10, gen(50))
        assert est.value == pytest.approx(math.pi)

    def test_weighted_closed_vs_radial_quadrature_oracle(self, gen):
        # oracle: 1-d quadrature of kappa_d * int ((p v q)^(-1) wedge ...) tails
        p0, r = 0.25, 1.1
        est = tail_mass(WEIGHTED, p0, r, 10, gen(51))
        per_q = lambda q: math.pi * max(max(p0, q) ** -0.5 - r**2, 0.0)
        kink = r ** -4.0  # support boundary of the positive part
        want = integrate.quad(per_q, 0, 1, points=[p0, kink])[0]
        assert est.value == pytest.approx(want, rel=1e-9)
        assert est.value > 0

    def test_mc_path_agrees_with_quadrature(self, gen):
        m = WeightedModel(2, epsilon=0.5, kernel="sum")
        p0, r = 0.3, 1.0
        est = tail_mass(m, p0, r, 400_000, gen(52))
        per_q = lambda q: math.pi * max((p0 + q) ** -0.5 - r**2, 0.0)
        want = integrate.quad(per_q, 0, 1)[0]
        assert est.method == "mc"
        assert abs(est.value - want) <= 3 * est.std_error

    def test_gilbert_uniform_closed_form(self, gen):
        g = GilbertModel(2, MarkDistribution.uniform01())
        for r in (0.0, 0.4, 1.2, 2.5):
            got = tail_mass(g, 0.3, r, 10, gen(53)).value
            per_q = lambda q: math.pi * max((0.3 + q) ** 2 - r**2, 0.0)
            assert got == pytest.approx(integrate.quad(per_q, 0, 1, points=[max(r - 0.3, 0)])[0],
                                        rel=1e-9, abs=1e-12)


class TestCatalogMetadata:
    def test_t_T_trivial_tags(self):
        assert not GILBERT.t_T_trivial
        assert GilbertModel(2, MarkDistribution.custom(lambda n, r: r.exponential(1, n))).t_T_trivial
        assert WeightedModel(2, epsilon=1.0).t_T_trivial
        assert not WeightedModel(2, epsilon=0.99).t_T_trivial
        assert WeightedModel(2, epsilon=1.4, delta=0.3, kernel="pref").t_T_trivial
        assert not WeightedModel(2, epsilon=1.2, delta=0.3, kernel="pref").t_T_trivial

    def test_range_sup(self):
        assert GILBERT.range_sup == 1.0
        assert WEIGHTED.range_sup == math.inf
        assert UnmarkedIndicatorModel(2, 0.7).range_sup == 0.7

    def test_degenerate_reproduces_unmarked(self, gen):
        # |M| = 1: the degenerate-mark Gilbert model is the unmarked disk model
        u = UnmarkedIndicatorModel(2, 1.0, level=1.0)
        rng = gen(54)
        dx = rng.standard_normal((100, 2))
        assert np.array_equal(u.phi(dx, 0.0, 0.0), GILBERT.phi(dx, 0.5, 0.5))
        assert u.degree(np.zeros(1))[0] == pytest.approx(math.pi)


class TestUnmarkedCustom:
    def _model(self):
        # phi(r) = 0.6 on [0,0.5], linear ramp to 0 at 1.0
        prof = lambda r: np.where(np.asarray(r) <= 0.5, 0.6,
                                  np.clip(0.6 * (1.0 - (np.asarray(r) - 0.5) / 0.5), 0, None))
        return UnmarkedCustomModel(2, prof, envelope_const=0.6, envelope_range=1.0)

    def test_d_phi_quadrature(self):
        m = self._model()
        want = 2 * math.pi * integrate.quad(
            lambda r: (0.6 if r <= 0.5 else 0.6 * (1 - (r - 0.5) / 0.5)) * r, 0, 1)[0]
        assert m.d_phi(0.0, 0.0) == pytest.approx(want, rel=1e-9)

    def test_displacement_rejection_exact(self, gen):
        rng = gen(55)
        m = self._model()
        x = m.sample_displacement(np.zeros(10**5), np.zeros(10**5), rng)
        r = np.linalg.norm(x, axis=1)
        edges = np.linspace(0, 1, 11)
        counts, _ = np.histogram(r, bins=edges)
        dens = lambda s: (0.6 if s <= 0.5 else 0.6 * (1 - (s - 0.5) / 0.5)) * s
        expected = np.array([integrate.quad(dens, a, b)[0] for a, b in zip(edges, edges[1:])])
        stat, pval = sps.chisquare(counts, expected / expected.sum() * counts.sum())
        assert pval > 0.01

    def test_exp_tail_envelope(self, gen):
        rng = gen(56)
        prof = lambda r: np.where(np.asarray(r) <= 1.0, 0.5, 0.5 * np.exp(-2.0 * (np.asarray(r) - 1.0)))
        m = UnmarkedCustomModel(2, prof, envelope_const=0.5, envelope_range=1.0,
                                tail=("exp", 0.5 * math.exp(2.0), 2.0))
        x = m.sample_displacement(np.zeros(20_000), np.zeros(20_000), rng)
        r = np.linalg.norm(x, axis=1)
        assert (r > 1.0).mean() > 0.05  # tail actually sampled
        want = 2 * math.pi * integrate.quad(lambda s: float(prof(s)) * s, 0, 40)[0]
        assert m.d_phi(0, 0) == pytest.approx(want, rel=1e-6)
        # beyond-range tail mass decays
        t1 = m.tail_mass_closed(0.0, 1.0)
        t2 = m.tail_mass_closed(0.0, 3.0)
        assert t1 > t2 > 0


class TestValidation:
    def test_catalog_passes(self, gen):
        for m in (GILBERT, WEIGHTED, UnmarkedIndicatorModel(2, 1.0, 0.7)):
            validate_connection_model(m, gen(57))

    def test_asymmetric_model_rejected(self, gen):
        class Crooked(UnmarkedIndicatorModel):
            def phi(self, dx, p, q):
                r = np.linalg.norm(np.asarray(dx, dtype=float), axis=-1)
                lean = np.asarray(dx, dtype=float)[..., 0] > 0
                return np.where(r <= self.range_, np.where(lean, 1.0, 0.5), 0.0)

        with pytest.raises(ModelSupportError, match="symmetric"):
            validate_connection_model(Crooked(2, 1.0), gen(58))

    def test_out_of_range_phi_rejected(self, gen):
        class Loud(UnmarkedIndicatorModel):
            def phi(self, dx, p, q):
                return 1.5 * super().phi(dx, p, q)

        with pytest.raises(ModelSupportError, match=r"\[0,1\]"):
            validate_connection_model(Loud(2, 1.0), gen(59))


class TestOperationsAPI:
    def test_scalar_sample_displacement(self, gen):
        v = sample_displacement(GILBERT, 0.5, 0.5, gen(60))
        assert v.shape == (2,)
        assert np.linalg.norm(v) <= 1.0

    def test_unit_ball_volume(self):
        assert unit_ball_volume(2) == pytest.approx(math.pi)
        assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
        assert unit_ball_volume(1) == pytest.approx(2.0)
