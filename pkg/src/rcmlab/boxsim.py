"""Static finite-box RCM sampling with union-find clustering.

Estimators built on it: percolation-probability proxies (boundary touch of
the root cluster, any-cluster face-to-face spanning), finite-size scaling for
the critical intensity, magnetization with ghost labels, and the ghost-free
susceptibility.

The root of the typical cluster sits at the box center (on the torus this is
the Palm construction up to translation); free-boundary runs use the distance
to the faces for the touch/spanning proxies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .geometry import FREE, TORUS, SpaceConfig
from .models import ConnectionModel
from .rng import as_generator
from .stats import KernelEstimate


class ResourceRefusal(RuntimeError):
    """Raised when a run would exceed the configured memory ceiling."""


# ---------------------------------------------------------------------------
# union-find
# ---------------------------------------------------------------------------

def uf_new(n: int) -> np.ndarray:
    return np.arange(n, dtype=np.int64)


def uf_find(parent: np.ndarray, i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]  # path halving
        i = parent[i]
    return int(i)


def uf_union(parent: np.ndarray, size: np.ndarray, a: int, b: int) -> None:
    ra, rb = uf_find(parent, a), uf_find(parent, b)
    if ra == rb:
        return
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]


# ---------------------------------------------------------------------------
# box sampling
# ---------------------------------------------------------------------------

@dataclass
class BoxSample:
    cfg: SpaceConfig
    t: float
    locations: np.ndarray
    marks: np.ndarray
    labels: np.ndarray | None
    parent: np.ndarray            # union-find forest over the points
    comp_size: np.ndarray
    edges: np.ndarray | None      # (m, 2) int pairs when stored
    omitted_edge_bound: float = 0.0

    @property
    def n_points(self) -> int:
        return len(self.marks)

    @property
    def largest_component_fraction(self) -> float:
        if self.n_points == 0:
            return 0.0
        roots = np.array([uf_find(self.parent, i) for i in range(self.n_points)])
        return float(np.bincount(roots).max() / self.n_points)


def _pair_cutoff(model: ConnectionModel, cfg: SpaceConfig, t: float,
                 omit_tol: float = 1e-2):
    """Candidate-pair distance cutoff and the omitted-edge probability bound.

    Finite-range models are exact.  Long-range models use the smallest radius
    r with t^2 L^d * sup_p tail_mass(p, r) <= omit_tol, per the quantified
    truncation contract.
    """
    if np.isfinite(model.range_sup):
        return min(model.range_sup, cfg.box_length), 0.0
    grid = model.mark_dist.default_grid()
    scale = t * t * cfg.volume
    lo, hi = 1e-9, cfg.box_length / 2
    bound_at = lambda r: scale * max(model.tail_mass_closed(float(p), r) or 0.0 for p in grid)
    if bound_at(hi) > omit_tol:
        return hi, bound_at(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if bound_at(mid) <= omit_tol:
            hi = mid
        else:
            lo = mid
    return hi, bound_at(hi)


def _candidate_pairs(locs: np.ndarray, cfg: SpaceConfig, r_cut: float,
                     memory_ceiling: float):
    """Unordered candidate index pairs within distance r_cut (superset)."""
    n = len(locs)
    if n < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    L, d = cfg.box_length, cfg.dimension
    ncell = int(L // r_cut) if r_cut > 0 else 0
    if ncell < 3:
        if n * (n - 1) / 2 > memory_ceiling:
            need = int(math.ceil(math.sqrt(2 * memory_ceiling)))
            raise ResourceRefusal(
                f"{n} points gives {n*(n-1)//2:.3g} candidate pairs; "
                f"reduce intensity or box so that the point count is <= {need}"
            )
        i, j = np.triu_indices(n, k=1)
        return i.astype(np.int64), j.astype(np.int64)

    width = L / ncell
    cell = np.floor(locs / width).astype(np.int64)
    cell[cell == ncell] = ncell - 1
    flat = np.zeros(n, dtype=np.int64)
    for k in range(d):
        flat = flat * ncell + cell[:, k]
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    uniq, starts = np.unique(sorted_flat, return_index=True)
    ends = np.append(starts[1:], n)
    members = {int(c): order[s:e] for c, s, e in zip(uniq, starts, ends)}

    offsets = []
    for off in np.ndindex(*([3] * d)):
        off = np.array(off) - 1
        nz = np.nonzero(off)[0]
        if len(nz) == 0 or off[nz[0]] > 0:
            offsets.append(off)

    srcs, dsts = [], []
    est_pairs = 0
    coords = {int(c): np.array(np.unravel_index(int(c), [ncell] * d)) for c in uniq}
    for c, mem in members.items():
        base = coords[c]
        for off in offsets:
            if not off.any():
                if len(mem) > 1:
                    a, b = np.triu_indices(len(mem), k=1)
                    srcs.append(mem[a])
                    dsts.append(mem[b])
                    est_pairs += len(a)
                continue
            nb = base + off
            if cfg.boundary == TORUS:
                nb = np.mod(nb, ncell)
            elif np.any(nb < 0) or np.any(nb >= ncell):
                continue
            key = 0
            for k in range(d):
                key = key * ncell + int(nb[k])
            other = members.get(key)
            if other is None:
                continue
            a, b = np.meshgrid(mem, other, indexing="ij")
            srcs.append(a.ravel())
            dsts.append(b.ravel())
            est_pairs += a.size
        if est_pairs > memory_ceiling:
            raise ResourceRefusal(
                f"candidate pair count exceeded the memory ceiling ({memory_ceiling:.3g}); "
                f"reduce the box length or intensity"
            )
    if not srcs:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(srcs), np.concatenate(dsts)


def _torus_delta(a, b, cfg):
    d = b - a
    if cfg.boundary == TORUS:
        L = cfg.box_length
        d -= L * np.round(d / L)
    return d


def sample_box(model: ConnectionModel, t: float, cfg: SpaceConfig, rng=None,
               with_labels: bool = False, store_edges: bool = False,
               memory_ceiling: float = 5e7) -> BoxSample:
    """One RCM sample on the box: Poisson(t L^d) points, pairwise Bernoulli edges."""
    if t < 0 or cfg.box_length <= 0:
        raise ValueError("need t >= 0 and L > 0")
    if model.dim != cfg.dimension:
        raise ValueError("model and space dimensions differ")
    rng = as_generator(rng)
    n = rng.poisson(t * cfg.volume)
    locs = rng.random((n, cfg.dimension)) * cfg.box_length
    marks = model.mark_dist.sample(n, rng)
    labels = rng.random(n) if with_labels else None

    r_cut, omit_bound = _pair_cutoff(model, cfg, t)
    i, j = _candidate_pairs(locs, cfg, r_cut, memory_ceiling)
    parent, size = uf_new(n), np.ones(n, dtype=np.int64)
    kept = []
    if len(i):
        delta = _torus_delta(locs[i], locs[j], cfg)
        dist = np.linalg.norm(delta, axis=1)
        within = dist <= r_cut
        i, j, dist = i[within], j[within], dist[within]
        probs = np.where(dist <= np.asarray(model.pair_radius(marks[i], marks[j])),
                         np.asarray(model.pair_height(marks[i], marks[j]), dtype=float), 0.0)
        if model.kind == "unmarked_custom":
            probs = model.phi(_torus_delta(locs[i], locs[j], cfg), marks[i], marks[j])
        hit = rng.random(len(i)) < probs
        for a, b in zip(i[hit], j[hit]):
            uf_union(parent, size, int(a), int(b))
            if store_edges:
                kept.append((int(a), int(b)))
    return BoxSample(cfg, t, locs, marks, labels, parent, size,
                     np.asarray(kept, dtype=np.int64).reshape(-1, 2) if store_edges else None,
                     omit_bound)


# ---------------------------------------------------------------------------
# typical cluster
# ---------------------------------------------------------------------------

@dataclass
class TypicalBatch:
    """Per-replication typical-cluster observables."""

    t: float
    cfg: SpaceConfig
    root_marks: np.ndarray
    n_points: np.ndarray
    size: np.ndarray
    diameter: np.ndarray        # torus metric; NaN above the pair cap
    wrap_ambiguous: np.ndarray  # torus diameter > L/2: excluded from tail fits
    touch: np.ndarray           # root cluster reaches the boundary band
    span_any: np.ndarray        # some cluster spans the box along an axis
    largest_frac: np.ndarray
    min_label: np.ndarray       # min ghost label in the root cluster (NaN if disabled)

    def magnetization_weight(self, gamma: float) -> np.ndarray:
        """(1-gamma)^|C|, with boundary-touching clusters weighted 0."""
        w = (1.0 - gamma) ** self.size
        return np.where(self.touch, 0.0, w)


def typical_cluster(box: BoxSample, model: ConnectionModel, rng=None,
                    root_mark=None, touch_width: float | None = None,
                    diam_cap: int = 4096):
    """Insert a typical root at the box center and report its cluster stats."""
    rng = as_generator(rng)
    cfg = box.cfg
    if root_mark is None:
        root_mark = float(model.mark_dist.sample(1, rng)[0])
    root_loc = np.full(cfg.dimension, cfg.box_length / 2.0)
    root_label = float(rng.random()) if box.labels is not None else math.nan
    n = box.n_points
    if touch_width is None:
        touch_width = _default_touch_width(model, cfg)

    if n:
        delta = _torus_delta(root_loc[None, :], box.locations, cfg)
        dist = np.linalg.norm(delta, axis=1)
        probs = np.where(dist <= np.asarray(model.pair_radius(root_mark, box.marks)),
                         np.asarray(model.pair_height(root_mark, box.marks), dtype=float), 0.0)
        if model.kind == "unmarked_custom":
            probs = model.phi(delta, root_mark, box.marks)
        nbr = np.nonzero(rng.random(n) < probs)[0]
    else:
        nbr = np.empty(0, dtype=int)

    roots = np.array([uf_find(box.parent, i) for i in range(n)], dtype=np.int64)
    in_cluster = np.zeros(n, dtype=bool)
    if len(nbr):
        hit_roots = np.unique(roots[nbr])
        in_cluster = np.isin(roots, hit_roots)
    members = np.nonzero(in_cluster)[0]
    size = 1 + len(members)

    pts = np.concatenate([root_loc[None, :], box.locations[members]])
    diam, ambiguous = math.nan, False
    if size <= diam_cap:
        dd = _torus_delta(pts[:, None, :], pts[None, :, :], cfg)
        diam = float(np.sqrt((dd * dd).sum(-1)).max()) if size > 1 else 0.0
        ambiguous = cfg.boundary == TORUS and diam > cfg.box_length / 2.0
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    touch = bool((lo <= touch_width).any() or (hi >= cfg.box_length - touch_width).any())
    min_label = root_label
    if box.labels is not None and len(members):
        min_label = min(root_label, float(box.labels[members].min()))
    return {
        "root_mark": root_mark, "size": size, "diameter": diam,
        "wrap_ambiguous": ambiguous, "touch": touch, "min_label": min_label,
        "members": members, "n_root_neighbors": int(len(nbr)),
    }


def _default_touch_width(model: ConnectionModel, cfg: SpaceConfig) -> float:
    r = model.range_sup
    if not np.isfinite(r):
        r, _ = _pair_cutoff(model, cfg, 1.0)
    return min(r, cfg.box_length / 8.0)


def _span_any(box: BoxSample, touch_width: float) -> bool:
    """Does any component reach both opposite faces along some axis?"""
    n = box.n_points
    if n == 0:
        return False
    cfg = box.cfg
    roots = np.array([uf_find(box.parent, i) for i in range(n)], dtype=np.int64)
    for ax in range(cfg.dimension):
        x = box.locations[:, ax]
        lo_roots = np.unique(roots[x <= touch_width])
        hi_roots = np.unique(roots[x >= cfg.box_length - touch_width])
        if np.intersect1d(lo_roots, hi_roots, assume_unique=True).size:
            return True
    return False


def typical_cluster_batch(model: ConnectionModel, t: float, cfg: SpaceConfig,
                          reps: int, rng=None, with_labels: bool = False,
                          touch_width: float | None = None, diam_cap: int = 4096,
                          memory_ceiling: float = 5e7,
                          backend: str | None = None) -> TypicalBatch:
    """reps independent boxes, one typical cluster each."""
    rng = as_generator(rng)
    if touch_width is None:
        touch_width = _default_touch_width(model, cfg)

    core = _backend.core(backend)
    desc = model.core_descriptor() if core is not None else None
    if desc is not None and np.isfinite(model.range_sup):
        out = core.box_typical_batch(
            int(reps), float(t), float(cfg.box_length), desc["dim"],
            1 if cfg.boundary == TORUS else 0, desc["kind"], desc["eps"], desc["delta"],
            desc["kernel_code"], desc["level"], desc["range"], desc["mark_kind"],
            desc["mark_value"], desc["atoms"], desc["weights"], float(model.range_sup),
            float(touch_width), bool(with_labels), int(diam_cap), float(memory_ceiling),
            rng.bit_generator,
        )
        (n_points, size, diam, ambiguous, touch, span, frac, min_label, root_marks) = out
        return TypicalBatch(t, cfg, root_marks, n_points, size, diam,
                            ambiguous.astype(bool), touch.astype(bool), span.astype(bool),
                            frac, min_label)

    n_points = np.zeros(reps, dtype=np.int64)
    size = np.zeros(reps, dtype=np.int64)
    diam = np.full(reps, np.nan)
    ambiguous = np.zeros(reps, dtype=bool)
    touch = np.zeros(reps, dtype=bool)
    span = np.zeros(reps, dtype=bool)
    frac = np.zeros(reps)
    min_label = np.full(reps, np.nan)
    root_marks = np.zeros(reps)
    for k in range(reps):
        box = sample_box(model, t, cfg, rng, with_labels=with_labels,
                         memory_ceiling=memory_ceiling)
        st = typical_cluster(box, model, rng, touch_width=touch_width, diam_cap=diam_cap)
        n_points[k] = box.n_points
        size[k] = st["size"]
        diam[k] = st["diameter"]
        ambiguous[k] = st["wrap_ambiguous"]
        touch[k] = st["touch"]
        span[k] = _span_any(box, touch_width)
        frac[k] = box.largest_component_fraction
        min_label[k] = st["min_label"]
        root_marks[k] = st["root_mark"]
    return TypicalBatch(t, cfg, root_marks, n_points, size, diam, ambiguous,
                        touch, span, frac, min_label)


# ---------------------------------------------------------------------------
# sweeps and t_c estimation
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    t_grid: np.ndarray
    L_list: tuple
    theta: dict          # (L -> array over t) boundary-touch fraction
    theta_se: dict
    span: dict           # (L -> array over t) any-cluster spanning fraction
    reps: dict           # (L -> int)
    t_c_hat: float | None
    t_c_ci: tuple | None
    crossings: list = field(default_factory=list)
    batches: dict = field(default_factory=dict)   # (t, L) -> TypicalBatch


def _crossing(t_grid, a, b):
    """First sign change of (a - b), linearly interpolated; None if none."""
    diff = a - b
    for k in range(len(t_grid) - 1):
        if diff[k] == 0:
            return float(t_grid[k])
        if diff[k] * diff[k + 1] < 0:
            w = diff[k] / (diff[k] - diff[k + 1])
            return float(t_grid[k] + w * (t_grid[k + 1] - t_grid[k]))
    return None


def theta_sweep(model: ConnectionModel, t_grid, L_list, reps, rng=None,
                boundary: str = FREE, n_boot: int = 400,
                keep_batches: bool = False, backend: str | None = None) -> SweepResult:
    """theta_hat(t, L) table and the spanning-crossing estimate of t_c.

    reps may be an int or a dict L -> int.  theta_hat is the boundary-touch
    fraction of the root cluster (converges to the percolation probability);
    t_c_hat comes from crossings of the any-cluster spanning curves, whose
    finite-size curves intersect near t_c, with a bootstrap CI.
    """
    rng = as_generator(rng)
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    theta, theta_se, span, reps_used = {}, {}, {}, {}
    batches = {}
    span_counts = {}
    for L in L_list:
        r = reps[L] if isinstance(reps, dict) else int(reps)
        reps_used[L] = r
        cfg = SpaceConfig(model.dim, float(L), boundary)
        th, se, sp = np.empty(len(t_grid)), np.empty(len(t_grid)), np.empty(len(t_grid))
        for k, t in enumerate(t_grid):
            batch = typical_cluster_batch(model, float(t), cfg, r, rng, backend=backend)
            th[k] = batch.touch.mean()
            se[k] = math.sqrt(max(th[k] * (1 - th[k]), 1.0 / r) / r)
            sp[k] = batch.span_any.mean()
            span_counts[(float(t), L)] = int(batch.span_any.sum())
            if keep_batches:
                batches[(float(t), L)] = batch
        theta[L], theta_se[L], span[L] = th, se, sp

    pairs = list(zip(L_list, L_list[1:]))
    crossings = [c for L1, L2 in pairs
                 if (c := _crossing(t_grid, span[L1], span[L2])) is not None]
    t_c_hat = float(np.mean(crossings)) if crossings else None

    t_c_ci = None
    if t_c_hat is not None:
        boots = []
        for _ in range(n_boot):
            bs = []
            for L1, L2 in pairs:
                a = np.array([rng.binomial(reps_used[L1], span[L1][k]) / reps_used[L1]
                              for k in range(len(t_grid))])
                b = np.array([rng.binomial(reps_used[L2], span[L2][k]) / reps_used[L2]
                              for k in range(len(t_grid))])
                c = _crossing(t_grid, a, b)
                if c is not None:
                    bs.append(c)
            if bs:
                boots.append(np.mean(bs))
        if boots:
            lo, hi = np.quantile(boots, [0.025, 0.975])
            t_c_ci = (float(lo), float(hi))
    return SweepResult(t_grid, tuple(L_list), theta, theta_se, span, reps_used,
                       t_c_hat, t_c_ci, crossings, batches)


# ---------------------------------------------------------------------------
# magnetization
# ---------------------------------------------------------------------------

def magnetization_estimates(batch: TypicalBatch, gamma: float):
    """(M_direct, M_formula, paired difference SE) from one labeled batch.

    M_direct is the ghost-hit fraction (min label <= gamma); M_formula is
    1 - mean((1-gamma)^|C|) with touching clusters weighted 0.  Both target
    the same magnetization, and the difference has mean 0 conditionally on
    the cluster sizes.
    """
    if np.isnan(batch.min_label).any():
        raise ValueError("batch was sampled without ghost labels")
    direct = (batch.min_label <= gamma).astype(float)
    formula = 1.0 - batch.magnetization_weight(gamma)
    n = direct.size
    m_direct = KernelEstimate.from_samples(direct)
    m_formula = KernelEstimate.from_samples(formula)
    diff_se = float((direct - formula).std(ddof=1) / math.sqrt(n))
    return m_direct, m_formula, diff_se


def magnetization(model: ConnectionModel, t: float, gamma: float, reps: int,
                  rng=None, cfg: SpaceConfig | None = None, backend: str | None = None):
    """Sample a labeled batch and return (M_direct, M_formula, diff_se, batch)."""
    cfg = cfg or SpaceConfig(model.dim, 32.0, FREE)
    batch = typical_cluster_batch(model, t, cfg, reps, rng, with_labels=True,
                                  backend=backend)
    m_d, m_f, se = magnetization_estimates(batch, gamma)
    return m_d, m_f, se, batch


def ghost_free_susceptibility(batch: TypicalBatch, gamma: float) -> KernelEstimate:
    """mean of |C| (1-gamma)^|C| over non-touching clusters (touching -> 0)."""
    w = batch.size * batch.magnetization_weight(gamma)
    return KernelEstimate.from_samples(w)


def finite_cluster_mean_size(batch: TypicalBatch) -> KernelEstimate:
    """Mean typical-cluster size among non-touching clusters (touching -> 0)."""
    return KernelEstimate.from_samples(np.where(batch.touch, 0.0, batch.size))


def magnetization_upper_bound_check(model: ConnectionModel, t: float, gamma: float,
                                    n: int, reps: int, rng=None,
                                    cfg: SpaceConfig | None = None,
                                    delta_bound: float | None = None,
                                    mark_grid=None, n_sigma: float = 4.0,
                                    backend: str | None = None):
    """Check M*(t,gamma) <= Delta_n(t) * Mbar(t,gamma) on the mark grid."""
    from .kernels import delta_n
    from .stats import within_margin
    rng = as_generator(rng)
    cfg = cfg or SpaceConfig(model.dim, 32.0, FREE)
    grid = model.mark_dist.default_grid() if mark_grid is None else np.asarray(mark_grid)
    if delta_bound is None:
        delta_bound = delta_n(model, t, n, rng=rng).value

    # Mbar: root mark ~ Q
    _, m_bar, _, _ = magnetization(model, t, gamma, reps, rng, cfg, backend=backend)

    # M*: grid-sup over fixed root marks, via the direct estimator
    best, best_se = -math.inf, 0.0
    per_mark = max(reps // max(len(grid), 1), 100)
    for p in grid:
        batch = _fixed_mark_batch(model, t, cfg, per_mark, float(p), rng, backend=backend)
        _, m_f, _ = magnetization_estimates(batch, gamma)
        if m_f.value > best:
            best, best_se = m_f.value, m_f.std_error
    joint = math.hypot(best_se, delta_bound * m_bar.std_error)
    return within_margin(f"M*<=Delta_{n}*Mbar t={t:.4g} gamma={gamma:.4g}",
                         best, delta_bound * m_bar.value, joint, n_sigma, one_sided=True)


def _fixed_mark_batch(model, t, cfg, reps, root_mark, rng, backend=None) -> TypicalBatch:
    rng = as_generator(rng)
    out = []
    tw = _default_touch_width(model, cfg)
    for _ in range(reps):
        box = sample_box(model, t, cfg, rng, with_labels=True)
        out.append(typical_cluster(box, model, rng, root_mark=root_mark, touch_width=tw))
    return TypicalBatch(
        t, cfg,
        np.full(reps, root_mark),
        np.zeros(reps, dtype=np.int64),
        np.array([o["size"] for o in out], dtype=np.int64),
        np.array([o["diameter"] for o in out]),
        np.array([o["wrap_ambiguous"] for o in out], dtype=bool),
        np.array([o["touch"] for o in out], dtype=bool),
        np.zeros(reps, dtype=bool),
        np.zeros(reps),
        np.array([o["min_label"] for o in out]),
    )


def magnetization_lower_bound_status(batch: TypicalBatch, gamma: float,
                                     delta_bound: float) -> dict:
    """Empirical status of Mbar >= sqrt(gamma/2)/Delta_n near criticality.

    The paper's lemma presumes an infinite mean finite-cluster size, which a
    finite run cannot witness; this is a log entry, never a test.
    """
    _, m_f, _ = magnetization_estimates(batch, gamma)
    rhs = math.sqrt(gamma / 2.0) / delta_bound
    return {
        "m_bar": m_f.value, "m_bar_se": m_f.std_error, "rhs": rhs,
        "holds_empirically": bool(m_f.value >= rhs),
        "finite_mean_size": finite_cluster_mean_size(batch).value,
    }


# ---------------------------------------------------------------------------
# shared-seed intensity coupling
# ---------------------------------------------------------------------------

def coupled_typical_sizes(model: ConnectionModel, t_low: float, t_high: float,
                          cfg: SpaceConfig, reps: int, rng=None):
    """Pathwise-coupled typical-cluster sizes at two intensities.

    The low-intensity box is an independent thinning (keep probability
    t_low/t_high) of the high-intensity box, with shared edge and root
    randomness, so size_low <= size_high holds sample by sample.
    """
    if not 0 <= t_low <= t_high:
        raise ValueError("need 0 <= t_low <= t_high")
    rng = as_generator(rng)
    keep_p = t_low / t_high if t_high > 0 else 0.0
    sizes = np.zeros((reps, 2), dtype=np.int64)
    touches = np.zeros((reps, 2), dtype=bool)
    tw = _default_touch_width(model, cfg)
    for k in range(reps):
        box = sample_box(model, t_high, cfg, rng, store_edges=True)
        n = box.n_points
        keep = rng.random(n) < keep_p
        root_mark = float(model.mark_dist.sample(1, rng)[0])
        root_loc = np.full(cfg.dimension, cfg.box_length / 2.0)
        u_root = rng.random(n)
        if n:
            delta = _torus_delta(root_loc[None, :], box.locations, cfg)
            dist = np.linalg.norm(delta, axis=1)
            probs = np.where(dist <= np.asarray(model.pair_radius(root_mark, box.marks)),
                             np.asarray(model.pair_height(root_mark, box.marks), dtype=float),
                             0.0)
            root_edges = u_root < probs
        else:
            root_edges = np.zeros(0, dtype=bool)
        for col, mask in ((0, keep), (1, np.ones(n, dtype=bool))):
            parent, size_arr = uf_new(n), np.ones(n, dtype=np.int64)
            if box.edges is not None:
                for a, b in box.edges:
                    if mask[a] and mask[b]:
                        uf_union(parent, size_arr, int(a), int(b))
            nbr = np.nonzero(root_edges & mask)[0]
            if len(nbr):
                roots = np.array([uf_find(parent, i) for i in range(n)])
                in_cl = np.isin(roots, np.unique(roots[nbr])) & mask
            else:
                in_cl = np.zeros(n, dtype=bool)
            sizes[k, col] = 1 + int(in_cl.sum())
            pts = np.concatenate([root_loc[None, :], box.locations[in_cl]])
            touches[k, col] = bool((pts.min(axis=0) <= tw).any()
                                   or (pts.max(axis=0) >= cfg.box_length - tw).any())
    return sizes[:, 0], sizes[:, 1], touches[:, 0], touches[:, 1]
