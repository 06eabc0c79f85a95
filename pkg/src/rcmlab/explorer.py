"""Exact lazy generation-by-generation sampling of the cluster of an added root.

Generation n+1 given the cluster history is a Poisson process with intensity
t * phibar(previous generations, x) * phi(current generation, x) * lambda(dx).
It is realized without any bounding box by superposition and thinning: every
current-generation vertex y spawns Poisson(t * D(mark_y)) candidates with the
d_phi-tilted mark law and phi-displacements, and a candidate x survives with
probability phi(V_n, x) * phibar(V_{<n}, x) / sum_y phi(x - y), which is a
valid thinning since the union bound dominates.  Edges from an accepted point
back to generation n are then drawn from independent Bernoulli(phi)
conditioned on at least one success, exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .geometry import FREE, GridIndex, SpaceConfig
from .models import ConnectionModel
from .rng import as_generator
from .stats import CensoredDataError, KernelEstimate, bootstrap_survival_decay, survival_points, TailFit

REASONS = ("", "max_points", "max_generations", "max_radius")


@dataclass(frozen=True)
class ExploreLimits:
    max_points: int = 1_000_000
    max_generations: int = 10_000
    max_radius: float = math.inf

    def __post_init__(self):
        if not (np.isfinite(self.max_points) or np.isfinite(self.max_generations)
                or np.isfinite(self.max_radius)):
            raise ValueError("at least one exploration limit must be finite")


@dataclass
class Cluster:
    """Rooted cluster sample with per-vertex generation bookkeeping."""

    root_mark: float
    dim: int
    locations: np.ndarray
    marks: np.ndarray
    gen_index: np.ndarray
    parent: np.ndarray
    edges: list
    gen_sizes: np.ndarray
    edge_maxima: np.ndarray  # edge_maxima[n] = E_n, index 0 unused
    depth: int | None
    truncated: bool = False
    reason: str = ""

    @property
    def size(self) -> int:
        return len(self.marks)

    def diameter(self) -> float:
        if self.size <= 1:
            return 0.0
        d = self.locations[:, None, :] - self.locations[None, :, :]
        return float(np.sqrt((d * d).sum(-1)).max())

    def root_distance(self) -> float:
        if self.size <= 1:
            return 0.0
        return float(np.linalg.norm(self.locations, axis=1).max())


def _conditional_edges(phis, dists, rng):
    """Bernoulli(phi) edge indicators conditioned on >= 1 success per row.

    Returns (edge matrix bool (c,m), per-row max edge length, first neighbor).
    """
    c, m = phis.shape
    suffix = np.ones((c, m + 1))
    for i in range(m - 1, -1, -1):
        suffix[:, i] = suffix[:, i + 1] * (1.0 - phis[:, i])
    edges = np.zeros((c, m), dtype=bool)
    no_succ = np.ones(c, dtype=bool)
    u = rng.random((c, m))
    for i in range(m):
        p_eff = np.where(no_succ, phis[:, i] / np.maximum(1.0 - suffix[:, i], 1e-300), phis[:, i])
        hit = u[:, i] < p_eff
        edges[:, i] = hit
        no_succ &= ~hit
    emax = np.where(edges, dists, 0.0).max(axis=1)
    first = edges.argmax(axis=1)
    return edges, emax, first


def explore(model: ConnectionModel, t: float, root_mark: float,
            limits: ExploreLimits | None = None, rng=None,
            record_edges: bool = True) -> Cluster:
    """Sample one cluster of a root at the origin with the given mark."""
    if t < 0:
        raise ValueError("intensity t must be >= 0")
    limits = limits or ExploreLimits()
    rng = as_generator(rng)
    model.check_marks(root_mark)

    dim = model.dim
    locs = [np.zeros((1, dim))]
    marks = [np.asarray([float(root_mark)])]
    gens = [np.zeros(1, dtype=np.int32)]
    parents = [np.asarray([-1], dtype=np.int64)]
    edges: list = []
    gen_sizes = [1]
    edge_maxima = [0.0]
    n_total = 1
    gen_start = 0  # global index of first vertex of the current generation
    depth = None
    truncated, reason = False, ""

    prev_locs = np.empty((0, dim))
    prev_marks = np.empty(0)
    cur_locs, cur_marks = locs[0], marks[0]
    use_grid = np.isfinite(model.range_sup)
    cfg_free = SpaceConfig(dim, 1.0, FREE)  # grid on unbounded space, free metric

    gen_no = 0
    while True:
        if gen_no + 1 > limits.max_generations:
            truncated, reason = True, "max_generations"
            break
        par, q, delta = model.sample_offspring(cur_marks, t, rng)
        if par.size == 0:
            depth = gen_no + 1
            break
        cand = cur_locs[par] + delta

        d = cand[:, None, :] - cur_locs[None, :, :]
        dists = np.sqrt((d * d).sum(-1))
        phis = np.asarray(model.phi(d, q[:, None], cur_marks[None, :]), dtype=float)
        sum_phi = phis.sum(axis=1)
        phi_gen = 1.0 - np.prod(1.0 - phis, axis=1)

        if prev_locs.shape[0]:
            if use_grid and prev_locs.shape[0] > 2048:
                grid = GridIndex.build(prev_locs, cfg_free, model.range_sup)
                pbar = np.ones(cand.shape[0])
                for i, x in enumerate(cand):
                    near = grid.query(x, model.range_sup)
                    if near.size:
                        dp = x[None, :] - prev_locs[near]
                        pbar[i] = np.prod(1.0 - model.phi(dp, q[i], prev_marks[near]))
            else:
                dp = cand[:, None, :] - prev_locs[None, :, :]
                pbar = np.prod(1.0 - np.asarray(model.phi(dp, q[:, None], prev_marks[None, :])),
                               axis=1)
        else:
            pbar = np.ones(cand.shape[0])

        accept = rng.random(cand.shape[0]) * sum_phi < phi_gen * pbar
        if not np.any(accept):
            depth = gen_no + 1
            break
        cand, q = cand[accept], q[accept]
        phis, dists = phis[accept], dists[accept]

        emat, emax_rows, first = _conditional_edges(phis, dists, rng)
        new_global = n_total + np.arange(cand.shape[0])
        if record_edges:
            src, dst = np.nonzero(emat)
            edges.extend(zip((gen_start + dst).tolist(), new_global[src].tolist()))

        locs.append(cand)
        marks.append(q)
        gens.append(np.full(cand.shape[0], gen_no + 1, dtype=np.int32))
        parents.append(gen_start + first)
        gen_sizes.append(cand.shape[0])
        edge_maxima.append(float(emax_rows.max()))

        prev_locs = np.concatenate([prev_locs, cur_locs])
        prev_marks = np.concatenate([prev_marks, cur_marks])
        gen_start = n_total
        n_total += cand.shape[0]
        cur_locs, cur_marks = cand, q
        gen_no += 1

        if n_total > limits.max_points:
            truncated, reason = True, "max_points"
            break
        if np.isfinite(limits.max_radius) and np.linalg.norm(cand, axis=1).max() > limits.max_radius:
            truncated, reason = True, "max_radius"
            break

    return Cluster(
        root_mark=float(root_mark),
        dim=dim,
        locations=np.concatenate(locs),
        marks=np.concatenate(marks),
        gen_index=np.concatenate(gens),
        parent=np.concatenate(parents),
        edges=edges,
        gen_sizes=np.asarray(gen_sizes, dtype=np.int64),
        edge_maxima=np.asarray(edge_maxima),
        depth=depth,
        truncated=truncated,
        reason=reason,
    )


@dataclass
class ExploreBatch:
    """Lean per-cluster statistics over many replications."""

    t: float
    root_marks: np.ndarray
    sizes: np.ndarray
    depth: np.ndarray           # tau, or -1 when not observed (truncated)
    reason: np.ndarray          # int8 codes indexing REASONS
    gen_sizes: np.ndarray       # (reps, record_k), |V_n| for n < record_k
    edge_max: np.ndarray        # (reps, record_k), E_n for 1 <= n < record_k
    diam: np.ndarray            # NaN when size above the diameter cap
    root_dist: np.ndarray
    final_marks: tuple | None = None   # (offsets, flat marks of the last generation)

    @property
    def truncated(self) -> np.ndarray:
        return self.reason != 0

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.truncated))

    def cumulative_sizes(self, n: int) -> np.ndarray:
        """|V_{<=n}| per replication (requires n < record_k)."""
        return self.gen_sizes[:, : n + 1].sum(axis=1)


def explore_stats(model: ConnectionModel, t: float, root_marks,
                  limits: ExploreLimits | None = None, rng=None,
                  record_k: int = 8, collect_final: bool = False,
                  diam_cap: int = 4096, backend: str | None = None) -> ExploreBatch:
    """Explore one cluster per entry of root_marks; compiled kernel when available."""
    limits = limits or ExploreLimits()
    rng = as_generator(rng)
    root_marks = np.asarray(root_marks, dtype=float)

    core = _backend.core(backend)
    desc = model.core_descriptor() if core is not None else None
    if desc is not None:
        out = core.explore_batch(
            root_marks, float(t), desc["dim"], desc["kind"], desc["eps"], desc["delta"],
            desc["kernel_code"], desc["level"], desc["range"], desc["mark_kind"],
            desc["mark_value"], desc["atoms"], desc["weights"],
            int(min(limits.max_points, 2**62)), int(min(limits.max_generations, 2**62)),
            float(limits.max_radius), int(record_k), bool(collect_final), int(diam_cap),
            rng.bit_generator,
        )
        sizes, depth, reason, gen_sizes, edge_max, diam, root_dist, fo, fm = out
        final = (fo, fm) if collect_final else None
        return ExploreBatch(t, root_marks, sizes, depth, reason, gen_sizes, edge_max,
                            diam, root_dist, final)

    reps = root_marks.size
    sizes = np.zeros(reps, dtype=np.int64)
    depth = np.full(reps, -1, dtype=np.int64)
    reason = np.zeros(reps, dtype=np.int8)
    gen_sizes = np.zeros((reps, record_k), dtype=np.int64)
    edge_max = np.zeros((reps, record_k))
    diam = np.full(reps, np.nan)
    root_dist = np.zeros(reps)
    offsets = np.zeros(reps + 1, dtype=np.int64)
    flat_marks: list = []
    for i in range(reps):
        c = explore(model, t, root_marks[i], limits, rng, record_edges=False)
        sizes[i] = c.size
        depth[i] = -1 if c.depth is None else c.depth
        reason[i] = REASONS.index(c.reason)
        k = min(record_k, len(c.gen_sizes))
        gen_sizes[i, :k] = c.gen_sizes[:k]
        ke = min(record_k, len(c.edge_maxima))
        edge_max[i, :ke] = c.edge_maxima[:ke]
        if c.size <= diam_cap:
            diam[i] = c.diameter()
        root_dist[i] = c.root_distance()
        if collect_final:
            last = c.marks[c.gen_index == int(limits.max_generations)]
            flat_marks.append(last)
            offsets[i + 1] = offsets[i] + last.size
    final = (offsets, np.concatenate(flat_marks) if flat_marks else np.empty(0)) \
        if collect_final else None
    return ExploreBatch(t, root_marks, sizes, depth, reason, gen_sizes, edge_max,
                        diam, root_dist, final)


# ---------------------------------------------------------------------------
# statistics over batches
# ---------------------------------------------------------------------------

@dataclass
class GenerationStats:
    c_n: list          # KernelEstimate of E|V_n| per n
    c_le_n: list       # KernelEstimate of E|V_{<=n}| per n
    c_hat: KernelEstimate
    censored_fraction: float


def generation_stats(batch: ExploreBatch) -> GenerationStats:
    """Per-generation means; censored clusters contribute lower bounds."""
    g = batch.gen_sizes
    c_n = [KernelEstimate.from_samples(g[:, n]) for n in range(g.shape[1])]
    c_le = [KernelEstimate.from_samples(g[:, : n + 1].sum(axis=1)) for n in range(g.shape[1])]
    return GenerationStats(
        c_n=c_n,
        c_le_n=c_le,
        c_hat=KernelEstimate.from_samples(batch.sizes),
        censored_fraction=batch.censored_fraction,
    )


def _tail_fit(values, censored, rng, *, integer_grid, min_exceedances=50,
              max_censored=0.01, n_boot=200):
    values = np.asarray(values, dtype=float)
    censored = np.asarray(censored, dtype=bool)
    frac = float(censored.mean()) if censored.size else 0.0
    if frac > max_censored:
        raise CensoredDataError(
            f"{frac:.2%} of samples censored (> {max_censored:.0%}); refusing tail fit"
        )
    x = values[~censored]
    ks, _ = survival_points(x, min_exceedances)
    if ks.size < 4:
        raise ValueError("not enough tail support for a slope fit")
    kmax = ks.max()
    lo = kmax / 10.0
    if integer_grid:
        grid = np.unique(np.round(ks[ks >= lo]))
    else:
        grid = np.linspace(max(lo, ks.min()), kmax, 20)
    decay, ci = bootstrap_survival_decay(x, grid, rng, n_boot=n_boot)
    return TailFit(decay=decay, intercept=float("nan"), ci=ci,
                   k_range=(float(grid.min()), float(grid.max())),
                   censored_fraction=frac, n_samples=int(x.size))


def tail_fit_size(sizes, censored, rng=None, **kw) -> TailFit:
    """Exponential-tail exponent of |V^v| from the largest decade of k."""
    return _tail_fit(sizes, censored, as_generator(rng), integer_grid=True, **kw)


def tail_fit_diameter(diams, censored, rng=None, **kw) -> TailFit:
    """Exponential-tail exponent of cluster diameters (or root distances)."""
    diams = np.asarray(diams, dtype=float)
    ok = np.isfinite(diams)
    return _tail_fit(diams[ok], np.asarray(censored, dtype=bool)[ok],
                     as_generator(rng), integer_grid=False, **kw)


def phi_profile(model: ConnectionModel, t: float, r_grid, mark, n_mc: int = 20_000, rng=None):
    """phi^v_t(r) = 1 - exp(-t * tail_mass(mark, r)) on the radius grid."""
    from .models import tail_mass
    rng = as_generator(rng)
    out = np.empty(len(r_grid))
    for i, r in enumerate(r_grid):
        est = tail_mass(model, mark, float(r), n_mc, rng)
        out[i] = 1.0 - math.exp(-t * est.value)
    return out


def phi_star_profile(model: ConnectionModel, t: float, r_grid, mark_grid,
                     n_mc: int = 20_000, rng=None) -> np.ndarray:
    """Table of phi^p_t(r) over (r, p) plus the grid-sup column phi*_t(r).

    Returns array of shape (len(r_grid), len(mark_grid)+1); last column is the
    maximum over the mark grid.
    """
    rng = as_generator(rng)
    table = np.empty((len(r_grid), len(mark_grid) + 1))
    for j, p in enumerate(mark_grid):
        table[:, j] = phi_profile(model, t, r_grid, float(p), n_mc, rng)
    table[:, -1] = table[:, :-1].max(axis=1)
    return table


def check_edge_bound(batch: ExploreBatch, model: ConnectionModel, t: float,
                     r_grid, n_values=(1, 2, 3), mark_grid=None, n_sigma: float = 4.0,
                     rng=None):
    """Empirical P(E_{<=n} > r) against the bound c_{<=n-1}(t) * phi*_t(r).

    Also checks the exact first-generation identity P(E_1 > r) = phi^v_t(r).
    Returns a list of ComparisonReport.
    """
    from .stats import within_margin
    rng = as_generator(rng)
    if mark_grid is None:
        mark_grid = model.mark_dist.default_grid()
    reps = batch.sizes.size
    star = phi_star_profile(model, t, r_grid, mark_grid, rng=rng)[:, -1]
    root_profile = phi_profile(model, t, r_grid, float(batch.root_marks[0]), rng=rng)

    reports = []
    for n in n_values:
        if n >= batch.gen_sizes.shape[1]:
            raise ValueError(f"record_k too small for n={n}")
        e_le_n = batch.edge_max[:, 1: n + 1].max(axis=1)
        c_le = batch.gen_sizes[:, :n].sum(axis=1)  # |V_{<=n-1}|
        c_hat, c_se = float(c_le.mean()), float(c_le.std(ddof=1) / math.sqrt(reps))
        for i, r in enumerate(r_grid):
            lhs = float(np.mean(e_le_n > r))
            lhs_se = math.sqrt(max(lhs * (1 - lhs), 1.0 / reps) / reps)
            rhs = c_hat * star[i]
            rhs_se = c_se * star[i]
            joint = math.hypot(lhs_se, rhs_se)
            reports.append(within_margin(
                f"edge_bound n={n} r={r:.4g}", lhs, rhs, joint, n_sigma, one_sided=True))
    # exact identity at n=1 (two-sided)
    e1 = batch.edge_max[:, 1]
    for i, r in enumerate(r_grid):
        lhs = float(np.mean(e1 > r))
        se = math.sqrt(max(lhs * (1 - lhs), 1.0 / reps) / reps)
        reports.append(within_margin(
            f"edge_identity n=1 r={r:.4g}", lhs, root_profile[i], se, n_sigma))
    return reports
