"""Monte Carlo kernel calculus for stationary marked connection models.

Estimates the n-step path kernels, their self-avoiding variants, the mixed
(r1, r2) mark norms, the generation-mass constant Delta_n(t), closed-form
lower bounds on the critical intensities, statistical subcriticality
certificates, and the mean-field bound curves they feed.

Essential suprema over marks are approximated by maxima over a finite mark
grid; every such estimate carries grid_sup=True and is a lower bound of the
true supremum, so reciprocal bounds built from it are approximate from above
and flagged as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .explorer import ExploreLimits, explore_stats
from .models import ConnectionModel, ModelSupportError
from .rng import as_generator
from .stats import KernelEstimate


@dataclass(frozen=True)
class NormSpec:
    """Mixed-norm order (r1 over the first mark, r2 over the second)."""

    r1: float
    r2: float
    mark_grid: tuple = ()

    def __post_init__(self):
        for r in (self.r1, self.r2):
            if not (r >= 1):
                raise ValueError("norm orders must be in [1, inf]")
        if (math.isinf(self.r1) or math.isinf(self.r2)) and len(self.mark_grid) == 0:
            raise ValueError("mark_grid required when a norm order is infinite")


def d_phi(model: ConnectionModel, p, q, n_mc: int = 0, rng=None) -> KernelEstimate:
    """d_phi(p,q); closed form for every catalog model."""
    val = model.d_phi(np.asarray(float(p)), np.asarray(float(q)))
    method = "quadrature" if model.kind == "unmarked_custom" else "closed_form"
    return KernelEstimate(float(val), 0.0, 0, method=method)


def _path_chain(model, p, q, n, n_mc, rng):
    """Marks of MC paths p_0=p, p_1..p_{n-1} ~ Q, p_n=q, shape (n_mc, n+1)."""
    marks = np.empty((n_mc, n + 1))
    marks[:, 0] = p
    marks[:, n] = q
    if n > 1:
        marks[:, 1:n] = model.mark_dist.sample(n_mc * (n - 1), rng).reshape(n_mc, n - 1)
    return marks


def d_phi_path(model: ConnectionModel, p, q, n: int, n_mc: int, rng=None) -> KernelEstimate:
    """d_phi^(n)(p,q): expected n-step path density between marks p and q.

    MC over the n-1 intermediate marks, multiplying closed-form d_phi factors.
    """
    if n < 1:
        raise ValueError("path order n must be >= 1")
    rng = as_generator(rng)
    if n == 1 or model.mark_dist.is_degenerate:
        val = 1.0
        marks = [p] + [model.mark_dist.value] * (n - 1) + [q]
        for a, b in zip(marks, marks[1:]):
            val *= float(model.d_phi(np.asarray(a), np.asarray(b)))
        return KernelEstimate(val, 0.0, 0, method="closed_form")
    marks = _path_chain(model, p, q, n, n_mc, rng)
    w = np.prod(model.d_phi(marks[:, :-1], marks[:, 1:]), axis=1)
    return KernelEstimate.from_samples(w)


def _selfavoiding_weights(model, marks, rng):
    """Path weights whose mean over the sampled chain is d_phi^[n](p, q).

    marks has shape (n_mc, n+1) with fixed columns 0 and n; steps follow the
    exact displacement law, so the weight is prod_i d_phi(p_i, p_{i+1}) times
    the no-chord factors prod(1 - phi(x_j - x_i, p_i, p_j)) over
    1 <= i, i+2 <= j <= n (chords at the path start carry no factor).
    """
    n_mc, ncol = marks.shape
    n = ncol - 1
    w = np.prod(model.d_phi(marks[:, :-1], marks[:, 1:]), axis=1)
    if n >= 3:
        pos = np.zeros((n_mc, n + 1, model.dim))
        for i in range(n):
            pos[:, i + 1] = pos[:, i] + model.sample_displacement(
                marks[:, i], marks[:, i + 1], rng)
        for i in range(1, n - 1):
            for j in range(i + 2, n + 1):
                w = w * (1.0 - model.phi(pos[:, j] - pos[:, i], marks[:, i], marks[:, j]))
    return w


def d_phi_selfavoiding(model: ConnectionModel, p, q, n: int, n_mc: int, rng=None,
                       return_samples: bool = False):
    """d_phi^[n](p,q): loop-free n-step path density (importance sampling)."""
    if n < 1:
        raise ValueError("path order n must be >= 1")
    rng = as_generator(rng)
    marks = _path_chain(model, p, q, n, n_mc, rng)
    w = _selfavoiding_weights(model, marks, rng)
    if return_samples:
        return w
    if n <= 2 and (model.mark_dist.is_degenerate or n == 1):
        # no chord factors below n=3, so the weight is a deterministic product
        return KernelEstimate(float(w[0]), 0.0, 0, method="closed_form")
    return KernelEstimate.from_samples(w)


def mixed_norm(fn, mark_dist, spec: NormSpec, n_mc: int, rng=None) -> KernelEstimate:
    """||L||_{r1,r2} of a kernel L(p,q) against the mark law Q.

    Finite equal orders reduce to a flat double integral (unbiased MC);
    infinite orders are grid suprema over spec.mark_grid (lower bounds of the
    essential sup, flagged grid_sup).  Unequal finite orders use a nested MC
    whose inner-power bias decays like 1/inner sample size.
    """
    rng = as_generator(rng)
    r1, r2 = spec.r1, spec.r2
    grid = np.asarray(spec.mark_grid, dtype=float)
    inf1, inf2 = math.isinf(r1), math.isinf(r2)
    grid_flag = (inf1 or inf2) and not mark_dist.is_degenerate

    if inf1 and inf2:
        vals = np.abs([[float(np.mean(fn(np.asarray([a]), np.asarray([b])))) for b in grid]
                       for a in grid])
        return KernelEstimate(float(vals.max()), 0.0, 0, method="mc", grid_sup=grid_flag)

    if inf1 or inf2:
        # sup over one mark of an L^r mean over the other; fn is symmetric in
        # our catalog so we always place the sup on the first argument.
        r = r2 if inf1 else r1
        best, best_se = -math.inf, 0.0
        for a in grid:
            qs = mark_dist.sample(n_mc, rng)
            x = np.abs(fn(np.full(n_mc, a), qs)) ** r
            m, se = float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_mc))
            if m > best:
                best, best_se = m, se
        val = best ** (1.0 / r)
        se = best_se * val / (r * best) if best > 0 else best_se
        return KernelEstimate(val, se, n_mc, method="mc", grid_sup=grid_flag)

    if r1 == r2:
        ps = mark_dist.sample(n_mc, rng)
        qs = mark_dist.sample(n_mc, rng)
        x = np.abs(fn(ps, qs)) ** r1
        m, se = float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_mc))
        val = m ** (1.0 / r1)
        se = se * val / (r1 * m) if m > 0 else se
        return KernelEstimate(val, se, n_mc, method="mc")

    # nested: outer over q, inner over p (documented small bias from the power)
    n_out = max(int(math.sqrt(n_mc)), 8)
    n_in = max(n_mc // n_out, 8)
    outer = np.empty(n_out)
    for k, b in enumerate(mark_dist.sample(n_out, rng)):
        inner = np.abs(fn(mark_dist.sample(n_in, rng), np.full(n_in, b))) ** r1
        outer[k] = inner.mean() ** (r2 / r1)
    m, se = float(outer.mean()), float(outer.std(ddof=1) / math.sqrt(n_out))
    val = m ** (1.0 / r2)
    se = se * val / (r2 * m) if m > 0 else se
    return KernelEstimate(val, se, n_mc, method="mc")


def d_phi_norm(model: ConnectionModel, r1, r2, n_mc: int = 50_000, rng=None,
               mark_grid=None) -> KernelEstimate:
    """Mixed norm of the one-step kernel d_phi."""
    grid = model.mark_dist.default_grid() if mark_grid is None else mark_grid
    spec = NormSpec(r1, r2, tuple(np.asarray(grid, dtype=float)))
    return mixed_norm(model.d_phi, model.mark_dist, spec, n_mc, rng)


def path_norm_inf1(model: ConnectionModel, n: int, n_mc: int, rng=None,
                   mark_grid=None) -> KernelEstimate:
    """||d^(n)||_{inf,1}: grid-sup over p of the Q-mean of d^(n)(p,.)."""
    rng = as_generator(rng)
    grid = model.mark_dist.default_grid() if mark_grid is None else np.asarray(mark_grid)
    best, best_se = -math.inf, 0.0
    for a in grid:
        qs = model.mark_dist.sample(n_mc, rng)
        marks = _path_chain(model, float(a), 0.0, n, n_mc, rng)
        marks[:, n] = qs
        w = np.prod(model.d_phi(marks[:, :-1], marks[:, 1:]), axis=1)
        m, se = float(w.mean()), float(w.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0
        if m > best:
            best, best_se = m, se
    method = "closed_form" if model.mark_dist.is_degenerate else "mc"
    se = 0.0 if method == "closed_form" else best_se
    return KernelEstimate(best, se, n_mc, method=method,
                          grid_sup=not model.mark_dist.is_degenerate)


def selfavoiding_norm(model: ConnectionModel, n: int, r2, n_mc: int, rng=None,
                      mark_grid=None) -> KernelEstimate:
    """||d^[n]||_{inf,r2} for r2 in {1, 2, inf} via grid-sup + per-mark MC.

    r2 = 2 multiplies two independent path weights sharing the same end mark,
    which gives an unbiased estimate of d^[n](p,q)^2 (one squared weight would
    be biased upward).
    """
    rng = as_generator(rng)
    grid = model.mark_dist.default_grid() if mark_grid is None else np.asarray(mark_grid)
    grid_flag = not model.mark_dist.is_degenerate
    best, best_se = -math.inf, 0.0
    if math.isinf(r2):
        for a in grid:
            for b in grid:
                est = d_phi_selfavoiding(model, float(a), float(b), n, n_mc, rng)
                if est.value > best:
                    best, best_se = est.value, est.std_error
        return KernelEstimate(best, best_se, n_mc, method="mc", grid_sup=grid_flag)
    if r2 not in (1, 2):
        raise ValueError("selfavoiding_norm supports r2 in {1, 2, inf}")
    for a in grid:
        qs = model.mark_dist.sample(n_mc, rng)
        marks = _path_chain(model, float(a), 0.0, n, n_mc, rng)
        marks[:, n] = qs
        x = _selfavoiding_weights(model, marks, rng)
        if r2 == 2:
            marks2 = _path_chain(model, float(a), 0.0, n, n_mc, rng)
            marks2[:, n] = qs
            x = x * _selfavoiding_weights(model, marks2, rng)
        m, se = float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_mc))
        if m > best:
            best, best_se = m, se
    val = best ** (1.0 / r2)
    se = best_se * val / (r2 * best) if best > 0 else best_se
    return KernelEstimate(val, se, n_mc, method="mc", grid_sup=grid_flag)


@dataclass(frozen=True)
class TTLowerBounds:
    """Closed-form lower bounds on the critical intensities.

    via_inf1 bounds t_T by 1/||d_phi||_{inf,1}; via_22 bounds t_T^(1) by
    1/||d_phi||_{2,2}.  Grid-sup norms underestimate the essential sup, so
    those bounds are approximate from above (approx_from_above=True).
    """

    via_inf1: KernelEstimate
    via_22: KernelEstimate
    approx_from_above: bool


def t_t_lower_bounds(model: ConnectionModel, n_mc: int = 50_000, rng=None,
                     mark_grid=None) -> TTLowerBounds:
    rng = as_generator(rng)
    if model.t_T_trivial:
        n22 = d_phi_norm(model, 2, 2, n_mc, rng, mark_grid)
        inv22 = _reciprocal(n22)
        return TTLowerBounds(KernelEstimate.exact(0.0), inv22, n22.grid_sup)
    ninf1 = d_phi_norm(model, math.inf, 1, n_mc, rng, mark_grid)
    n22 = d_phi_norm(model, 2, 2, n_mc, rng, mark_grid)
    return TTLowerBounds(_reciprocal(ninf1), _reciprocal(n22),
                         ninf1.grid_sup or n22.grid_sup)


def _reciprocal(est: KernelEstimate) -> KernelEstimate:
    if est.value <= 0:
        return KernelEstimate(math.inf, 0.0, est.n_samples, method=est.method,
                              grid_sup=est.grid_sup)
    return KernelEstimate(1.0 / est.value, est.std_error / est.value**2,
                          est.n_samples, method=est.method, grid_sup=est.grid_sup)


def delta_n(model: ConnectionModel, t: float, n: int, n_mc: int = 50_000, rng=None,
            mark_grid=None) -> KernelEstimate:
    """Upper bound on Delta_n(t) = c*_{<=n-1}(t) + ||v_n(t)||_{inf,inf}.

    Uses c*_{<=n-1} <= sum_k t^k ||d^(k)||_{inf,1} and
    ||v_n||_{inf,inf} <= t^n ||d^[n]||_{inf,inf}; for even n the alternative
    t^n ||d^[n/2]||_{inf,2}^2 is also computed and the smaller bound is kept.
    The result is >= 1 by construction (the k=0 term).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    rng = as_generator(rng)
    value, var = 1.0, 0.0
    for k in range(1, n):
        est = path_norm_inf1(model, k, n_mc, rng, mark_grid)
        value += t**k * est.value
        var += (t**k * est.std_error) ** 2
    if t > 0:
        tail = selfavoiding_norm(model, n, math.inf, n_mc, rng, mark_grid)
        tail_val = t**n * tail.value
        tail_var = (t**n * tail.std_error) ** 2
        if n % 2 == 0:
            half = selfavoiding_norm(model, n // 2, 2, n_mc, rng, mark_grid)
            alt_val = t**n * half.value**2
            alt_var = (t**n * 2 * half.value * half.std_error) ** 2
            if alt_val < tail_val:
                tail_val, tail_var = alt_val, alt_var
        value += tail_val
        var += tail_var
    se = math.sqrt(var)
    method = "closed_form" if se == 0.0 else "mc"
    return KernelEstimate(value, se, n_mc, method=method,
                          grid_sup=not model.mark_dist.is_degenerate)


@dataclass(frozen=True)
class SubcritCertificate:
    """Statistical subcriticality certificate from Corollary-style bounds.

    certified means c*_n(t) + margin*SE < 1, in which case mean cluster sizes
    are bounded by c*_{<=n}(t) / (1 - c*_n(t)).  The certificate is
    statistical (Monte Carlo + mark-grid sup), not a rigorous proof.
    """

    t: float
    n: int
    c_star_n: KernelEstimate
    c_star_le_n: KernelEstimate
    bound_on_c_star: float
    verdict: str  # "certified" | "inconclusive"
    margin_sigmas: float = 4.0

    def __post_init__(self):
        if self.verdict == "certified":
            assert self.c_star_n.value + self.margin_sigmas * self.c_star_n.std_error < 1.0


def subcriticality_certificate(model: ConnectionModel, t: float, n: int,
                               cluster_mc_budget: int = 100_000, rng=None,
                               mark_grid=None, margin_sigmas: float = 4.0,
                               limits: ExploreLimits | None = None) -> SubcritCertificate:
    """Certify t < t_T by estimating c*_n(t) with the cluster explorer."""
    if model.t_T_trivial:
        raise ModelSupportError("model is tagged t_T-trivial (D*_phi = inf); refusing certificate")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(rng)
    grid = model.mark_dist.default_grid() if mark_grid is None else np.asarray(mark_grid)
    reps = max(cluster_mc_budget // len(grid), 1)
    limits = limits or ExploreLimits(max_points=1_000_000, max_generations=n)

    best_n = KernelEstimate.exact(0.0)
    best_le = KernelEstimate.exact(1.0)
    for p in grid:
        batch = explore_stats(model, t, np.full(reps, float(p)), limits, rng,
                              record_k=n + 1)
        gn = KernelEstimate.from_samples(batch.gen_sizes[:, n])
        gle = KernelEstimate.from_samples(batch.cumulative_sizes(n))
        if gn.value >= best_n.value:
            best_n = gn
        if gle.value >= best_le.value:
            best_le = gle
    certified = best_n.value + margin_sigmas * best_n.std_error < 1.0
    bound = best_le.value / (1.0 - best_n.value) if certified else math.inf
    return SubcritCertificate(
        t=t, n=n, c_star_n=best_n, c_star_le_n=best_le,
        bound_on_c_star=bound,
        verdict="certified" if certified else "inconclusive",
        margin_sigmas=margin_sigmas,
    )


def certificate_scan(model: ConnectionModel, t_grid, n_max: int = 4,
                     cluster_mc_budget: int = 50_000, rng=None, mark_grid=None):
    """Largest certified t on the grid, scanning generation orders n <= n_max.

    Returns (t_best, list of (t, best n or None, certificate or None)).
    """
    rng = as_generator(rng)
    results = []
    t_best = None
    for t in sorted(t_grid):
        got = None
        for n in range(1, n_max + 1):
            cert = subcriticality_certificate(model, float(t), n, cluster_mc_budget, rng,
                                              mark_grid)
            if cert.verdict == "certified":
                got = (n, cert)
                break
        if got is None:
            results.append((float(t), None, None))
        else:
            results.append((float(t), got[0], got[1]))
            t_best = float(t)
    return t_best, results


def mean_field_susceptibility_curve(t_c_hat: float, delta_fn, t_grid):
    """t -> t_c / (Delta_n(t) (t_c - t)) on subcritical grid points (t:main (v))."""
    out = []
    for t in t_grid:
        if not 0 <= t < t_c_hat:
            continue
        out.append((float(t), t_c_hat / (delta_fn(t) * (t_c_hat - t))))
    return out


def mean_field_percolation_curve(t_c_hat: float, delta_fn, theta_at_tc: float,
                                 delta: float, t_grid):
    """t -> (theta(t_c)/delta + 1{theta(t_c)=0}/(2 t Delta_n(t))) (t - t_c).

    Valid on [t_c, t_c + delta] (t:main (vi)).
    """
    out = []
    for t in t_grid:
        if not t_c_hat <= t <= t_c_hat + delta:
            continue
        slope = theta_at_tc / delta
        if theta_at_tc == 0.0:
            slope += 1.0 / (2.0 * t * delta_fn(t))
        out.append((float(t), slope * (t - t_c_hat)))
    return out
