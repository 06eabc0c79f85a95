import math

import numpy as np
import pytest
from scipy import integrate

from rcmlab.explorer import explore_stats
from rcmlab.kernels import (
    NormSpec,
    _path_chain,
    _selfavoiding_weights,
    certificate_scan,
    d_phi,
    d_phi_norm,
    d_phi_path,
    d_phi_selfavoiding,
    delta_n,
    mean_field_percolation_curve,
    mean_field_susceptibility_curve,
    mixed_norm,
    path_norm_inf1,
    selfavoiding_norm,
    subcriticality_certificate,
    t_t_lower_bounds,
)
from rcmlab.models import GilbertModel, MarkDistribution, ModelSupportError, WeightedModel

GILBERT = GilbertModel(2, MarkDistribution.degenerate(0.5))
GILBERT_U = GilbertModel(2, MarkDistribution.uniform01())
WEIGHTED = WeightedModel(2, epsilon=0.5)


class TestDPhi:
    def test_gilbert_pi(self, gen):
        est = d_phi(GILBERT, 0.5, 0.5)
        assert est.value == pytest.approx(math.pi)
        assert est.std_error == 0.0

    def test_weighted_ball_volume(self, gen):
        # kappa_d * (p v q)^(-eps), cross-checked by MC over a covering disk
        est = d_phi(WEIGHTED, 0.25, 0.04)
        assert est.value == pytest.approx(math.pi * 0.25**-0.5)
        rng = gen(100)
        n = 400_000
        rmax = 0.25**-0.25 * 1.1  # covers the pair radius (p v q)^(-eps/d)
        xs = rng.random((n, 2)) * 2 * rmax - rmax
        vals = WEIGHTED.phi(xs, np.full(n, 0.25), np.full(n, 0.04)) * (2 * rmax) ** 2
        se = vals.std(ddof=1) / math.sqrt(n)
        assert abs(vals.mean() - est.value) <= 3 * se

    def test_symmetry_exact(self):
        assert d_phi(WEIGHTED, 0.3, 0.7).value == d_phi(WEIGHTED, 0.7, 0.3).value


class TestDPhiPath:
    def test_degenerate_power(self, gen):
        est = d_phi_path(GILBERT, 0.5, 0.5, 2, 10, gen(101))
        assert est.value == pytest.approx(math.pi**2)
        assert est.method == "closed_form"

    def test_n1_equals_d_phi(self, gen):
        assert d_phi_path(WEIGHTED, 0.3, 0.8, 1, 10, gen(102)).value == \
            d_phi(WEIGHTED, 0.3, 0.8).value

    def test_n0_rejected(self, gen):
        with pytest.raises(ValueError):
            d_phi_path(GILBERT, 0.5, 0.5, 0, 10, gen(103))

    def test_weighted_vs_quadrature_oracle(self, gen):
        # d^(2)(p,q) = pi^2 int (p v r)^(-1/2) (r v q)^(-1/2) dr
        p0 = q0 = 0.25
        want = math.pi**2 * integrate.quad(
            lambda r: max(p0, r) ** -0.5 * max(r, q0) ** -0.5, 0, 1, points=[p0])[0]
        # analytic check of the oracle itself: pi^2 (1 + ln 4) at p=q=1/4
        assert want == pytest.approx(math.pi**2 * (1 + math.log(4)), rel=1e-9)
        est = d_phi_path(WEIGHTED, p0, q0, 2, 200_000, gen(104))
        assert abs(est.value - want) <= 4 * est.std_error


class TestSelfAvoiding:
    def test_n1_exact(self, gen):
        est = d_phi_selfavoiding(WEIGHTED, 0.3, 0.8, 1, 10, gen(105))
        assert est.value == d_phi(WEIGHTED, 0.3, 0.8).value
        assert est.std_error == 0.0

    def test_n2_has_no_chords(self, gen):
        # chord factors need j >= i+2 with i >= 1, empty below n=3
        est = d_phi_selfavoiding(GILBERT, 0.5, 0.5, 2, 10, gen(106))
        assert est.value == pytest.approx(math.pi**2)

    def test_dominated_by_path_kernel_pathwise(self, gen):
        rng = gen(107)
        marks = _path_chain(WEIGHTED, 0.3, 0.6, 4, 5000, rng)
        w_path = np.prod(WEIGHTED.d_phi(marks[:, :-1], marks[:, 1:]), axis=1)
        w_sa = _selfavoiding_weights(WEIGHTED, marks, rng)
        assert np.all(w_sa <= w_path + 1e-12)

    def test_submultiplicativity_4sigma(self, gen):
        # d^[2n](p,q) <= int d^[n](p,r) d^[n](r,q) Q(dr), n=2
        rng = gen(108)
        p0, q0, n, m = 0.4, 0.6, 2, 60_000
        lhs = d_phi_selfavoiding(GILBERT_U, p0, q0, 2 * n, m, rng)
        r = GILBERT_U.mark_dist.sample(m, rng)
        ma = _path_chain(GILBERT_U, p0, 0.0, n, m, rng)
        ma[:, n] = r
        mb = _path_chain(GILBERT_U, 0.0, q0, n, m, rng)
        mb[:, 0] = r
        w = _selfavoiding_weights(GILBERT_U, ma, rng) * _selfavoiding_weights(GILBERT_U, mb, rng)
        rhs, rhs_se = w.mean(), w.std(ddof=1) / math.sqrt(m)
        joint = math.hypot(lhs.std_error, rhs_se)
        assert lhs.value <= rhs + 4 * joint


class TestMixedNorm:
    def test_constant_kernel(self, gen):
        const = lambda p, q: np.full(np.broadcast_shapes(np.shape(p), np.shape(q)), 2.5)
        md = MarkDistribution.uniform01()
        for spec in (NormSpec(1, 1), NormSpec(2, 2), NormSpec(1, 2),
                     NormSpec(math.inf, 1, (0.5,)), NormSpec(math.inf, math.inf, (0.5,))):
            est = mixed_norm(const, md, spec, 2000, gen(109))
            assert est.value == pytest.approx(2.5, rel=1e-9)

    def test_gilbert_inf1_is_pi(self, gen):
        est = d_phi_norm(GILBERT, math.inf, 1, 100, gen(110))
        assert est.value == pytest.approx(math.pi)
        assert not est.grid_sup

    def test_weighted_22_analytic(self, gen):
        # ||d_phi||_{2,2}^2 = pi^2 int int (p v q)^(-1) = 2 pi^2, oracle: dblquad
        want = math.pi * math.sqrt(2.0)
        oracle = math.pi * math.sqrt(integrate.dblquad(
            lambda q, p: 1.0 / max(p, q), 0, 1, 0, 1)[0])
        assert oracle == pytest.approx(want, rel=1e-8)
        est = d_phi_norm(WEIGHTED, 2, 2, 400_000, gen(111))
        assert abs(est.value - want) <= 4 * est.std_error

    def test_norm_ordering_chain(self, gen):
        # ||.||_{1,1} <= max(||.||_{inf,1}, ||.||_{2,2}) <= ||.||_{inf,2} <= ||.||_{inf,inf}
        rng = gen(112)
        grid = [0.02, 0.25, 0.5, 0.75, 0.98]
        n11 = d_phi_norm(GILBERT_U, 1, 1, 100_000, rng, grid)
        n22 = d_phi_norm(GILBERT_U, 2, 2, 100_000, rng, grid)
        ninf1 = d_phi_norm(GILBERT_U, math.inf, 1, 100_000, rng, grid)
        ninf2 = d_phi_norm(GILBERT_U, math.inf, 2, 100_000, rng, grid)
        ninfinf = d_phi_norm(GILBERT_U, math.inf, math.inf, 100, rng, grid)
        slack = 4 * math.hypot(n11.std_error, max(ninf1.std_error, n22.std_error))
        assert n11.value <= max(ninf1.value, n22.value) + slack
        assert max(ninf1.value, n22.value) <= ninf2.value + 4 * math.hypot(
            ninf1.std_error, ninf2.std_error) + 4 * n22.std_error
        assert ninf2.value <= ninfinf.value + 4 * ninf2.std_error


class TestPathNorms:
    def test_inf1_submultiplicative(self, gen):
        # ||d^(n)||_{inf,1} <= ||d_phi||_{inf,1}^n, paired MC at 4 sigma
        rng = gen(113)
        base = d_phi_norm(GILBERT_U, math.inf, 1, 100_000, rng, [0.98])
        n3 = path_norm_inf1(GILBERT_U, 3, 100_000, rng, [0.98])
        joint = math.hypot(n3.std_error, 3 * base.value**2 * base.std_error)
        assert n3.value <= base.value**3 + 4 * joint

    def test_degenerate_closed(self, gen):
        est = path_norm_inf1(GILBERT, 2, 100, gen(114))
        assert est.value == pytest.approx(math.pi**2)
        assert est.std_error == 0.0


class TestTTLowerBounds:
    def test_gilbert_both_inv_pi(self, gen):
        b = t_t_lower_bounds(GILBERT, 1000, gen(115))
        assert b.via_inf1.value == pytest.approx(1 / math.pi)
        assert b.via_22.value == pytest.approx(1 / math.pi)
        assert not b.approx_from_above

    def test_trivial_model_zero(self, gen):
        g = GilbertModel(2, MarkDistribution.custom(lambda n, r: r.exponential(1, n)))
        b = t_t_lower_bounds(g, 10_000, gen(116))
        assert b.via_inf1.value == 0.0

    def test_weighted_values(self, gen):
        b = t_t_lower_bounds(WEIGHTED, 300_000, gen(117))
        # ||d||_{inf,1} -> 2 pi as p -> 0; the grid-sup stops at the grid edge
        # p=0.02, giving exactly 1/(pi (2 - sqrt(0.02))), above the true 1/(2 pi)
        assert b.approx_from_above
        assert b.via_inf1.value >= 1 / (2 * math.pi)
        grid_val = 1 / (math.pi * (2 - math.sqrt(0.02)))
        assert b.via_inf1.value == pytest.approx(grid_val, rel=1e-3)
        assert abs(b.via_22.value - 1 / (math.pi * math.sqrt(2))) <= \
            4 * max(b.via_22.std_error, 1e-4)


class TestDeltaN:
    def test_t_zero_is_one(self, gen):
        assert delta_n(GILBERT, 0.0, 3, 100, gen(118)).value == 1.0

    def test_gilbert_n1_closed(self, gen):
        t = 0.2
        est = delta_n(GILBERT, t, 1, 100, gen(119))
        assert est.value == pytest.approx(1.0 + t * math.pi)
        assert est.std_error == 0.0

    def test_gilbert_uniform_n2_oracle(self, gen):
        # at the grid point p=q=0.98 every term is analytic
        t = 0.05
        a = 0.98
        d1 = math.pi * ((a + 1) ** 3 - a**3) / 3
        d2 = math.pi**2 * ((a + 1) ** 5 - a**5) / 5      # int d(a,r) d(r,a) dr at r bounds, see below
        d2 = math.pi**2 * integrate.quad(lambda r: (a + r) ** 2 * (r + a) ** 2, 0, 1)[0]
        want = 1.0 + t * d1 + t * t * d2
        est = delta_n(GILBERT_U, t, 2, 60_000, gen(120), mark_grid=[a])
        assert abs(est.value - want) <= max(4 * est.std_error, 1e-9)

    def test_monotone_in_t_shared_seed(self, gen):
        vals = [delta_n(GILBERT_U, t, 2, 20_000, gen(121), mark_grid=[0.9]).value
                for t in (0.0, 0.02, 0.05, 0.08)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_at_least_one(self, gen):
        for t in (0.0, 0.1, 0.3):
            assert delta_n(GILBERT, t, 2, 5000, gen(122)).value >= 1.0


class TestCertificates:
    def test_t_zero_certified_bound_one(self, gen):
        cert = subcriticality_certificate(GILBERT, 0.0, 1, 2000, gen(123))
        assert cert.verdict == "certified"
        assert cert.bound_on_c_star == pytest.approx(1.0)

    def test_formula_instantiation_at_half(self, gen):
        # c1 = 0.5 -> bound approx 1.5/0.5 = 3
        t = 0.5 / math.pi
        cert = subcriticality_certificate(GILBERT, t, 1, 60_000, gen(124))
        assert cert.verdict == "certified"
        assert cert.bound_on_c_star == pytest.approx(3.0, rel=0.05)

    def test_gilbert_point_two(self, gen):
        t = 0.2 / math.pi
        cert = subcriticality_certificate(GILBERT, t, 1, 60_000, gen(125))
        assert cert.verdict == "certified"
        assert cert.c_star_n.value == pytest.approx(0.2, abs=4 * cert.c_star_n.std_error)
        assert cert.bound_on_c_star == pytest.approx(1.5, rel=0.05)

    def test_refuses_trivial_model(self, gen):
        g = GilbertModel(2, MarkDistribution.custom(lambda n, r: r.exponential(1, n)))
        with pytest.raises(ModelSupportError):
            subcriticality_certificate(g, 0.01, 1, 100, gen(126))

    def test_supercritical_not_certified(self, gen):
        cert = subcriticality_certificate(GILBERT, 2.0, 1, 20_000, gen(127))
        assert cert.verdict == "inconclusive"
        assert cert.bound_on_c_star == math.inf

    def test_scan_monotone_verdicts(self, gen):
        ts = np.array([0.1, 0.25, 0.7, 1.2]) / math.pi
        t_best, rows = certificate_scan(GILBERT, ts, n_max=2,
                                        cluster_mc_budget=20_000, rng=gen(128))
        certed = [r[1] is not None for r in rows]
        # certified set is a down-set on the grid
        assert certed == sorted(certed, reverse=True)
        assert t_best is not None and t_best >= 0.25 / math.pi


class TestCnBound:
    def test_c2_below_t2_selfavoiding_bound(self, gen):
        # cnbound2: c_2(t) <= t^2 int d^[2](p,q) Q(dq) (= (t pi)^2, degenerate)
        t = 0.5 / math.pi
        batch = explore_stats(GILBERT, t, np.full(20_000, 0.5), rng=gen(129))
        c2 = batch.gen_sizes[:, 2]
        se = c2.std(ddof=1) / math.sqrt(c2.size)
        assert c2.mean() <= 0.25 + 4 * se


class TestCurves:
    def test_susceptibility_substitution(self):
        pts = mean_field_susceptibility_curve(2.0, lambda t: 2.0, [1.0])
        assert pts == [(1.0, 1.0)]

    def test_susceptibility_diverges(self):
        tc = 1.0
        pts = mean_field_susceptibility_curve(tc, lambda t: 1.0, [0.999999 * tc])
        assert pts[0][1] > 1e5

    def test_percolation_zero_at_tc(self):
        pts = mean_field_percolation_curve(1.5, lambda t: 2.0, 0.0, 0.5, [1.5])
        assert pts[0][1] == 0.0

    def test_percolation_zero_branch_arithmetic(self):
        tc = 1.0
        pts = mean_field_percolation_curve(tc, lambda t: 2.0, 0.0, 0.2, [1.1 * tc])
        assert pts[0][1] == pytest.approx(0.1 / 4.4)

    def test_grid_filtering(self):
        pts = mean_field_susceptibility_curve(1.0, lambda t: 1.0, [0.5, 1.0, 1.5])
        assert [t for t, _ in pts] == [0.5]
        pts2 = mean_field_percolation_curve(1.0, lambda t: 1.0, 0.0, 0.3, [0.9, 1.0, 1.2, 1.4])
        assert [t for t, _ in pts2] == [1.0, 1.2]
