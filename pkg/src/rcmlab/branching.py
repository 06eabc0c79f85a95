"""Galton-Watson and spatial branching samplers, and statistical verification
of the stochastic-domination chain between cluster generations, the spatial
branching processes and the dominating Poisson Galton-Watson process.

Stochastic domination is tested on scalar totals only, with a one-sided
two-sample DKW band: "violated" is reported only when the empirical CDF of
the supposedly smaller variable dips below the other by more than the joint
band, so equal-law inputs practically never trip it at the configured level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .explorer import ExploreLimits, explore_stats
from .models import ConnectionModel
from .rng import as_generator


@dataclass(frozen=True)
class GenerationSchedule:
    """Per-mark generation depth h (>= 1 everywhere) with its sup h_star."""

    h: object                # callable mark -> int, or constant int
    h_star: int

    def __post_init__(self):
        if self.h_star < 1:
            raise ValueError("h_star must be >= 1")

    @classmethod
    def constant(cls, n: int) -> "GenerationSchedule":
        return cls(h=int(n), h_star=int(n))

    def depth(self, mark: float) -> int:
        v = self.h if isinstance(self.h, int) else int(self.h(mark))
        if v < 1:
            raise ValueError("schedule must map every mark to h >= 1")
        return v


@dataclass
class BranchingRun:
    """One realization of a (spatial) branching process."""

    generation_sizes: list            # |W_k| per level k (k=0 is the root)
    tilde_sizes: list                 # |W~_k| per level k
    extinct: bool
    truncated: bool = False

    @property
    def total(self) -> int:
        return int(sum(self.generation_sizes))

    @property
    def tilde_total(self) -> int:
        return int(sum(self.tilde_sizes))

    def cumulative(self, k: int) -> int:
        return int(sum(self.generation_sizes[: k + 1]))

    def tilde_cumulative(self, k: int) -> int:
        return int(sum(self.tilde_sizes[: k + 1]))


def gw_poisson(mean: float, max_generations: int, rng=None) -> BranchingRun:
    """Galton-Watson process with Poisson(mean) offspring, W_0 = 1."""
    if mean < 0:
        raise ValueError("offspring mean must be >= 0")
    rng = as_generator(rng)
    sizes = [1]
    while sizes[-1] > 0 and len(sizes) <= max_generations:
        sizes.append(int(rng.poisson(mean * sizes[-1])))
    extinct = sizes[-1] == 0
    if extinct:
        sizes = sizes[:-1] or [1]
        if not sizes:
            sizes = [1]
    return BranchingRun(sizes, list(sizes), extinct=extinct, truncated=not extinct)


def gw_poisson_batch(mean: float, reps: int, levels: int, rng=None):
    """Vectorized GW: per-replication W_k for k <= levels, plus totals.

    Returns (gen_counts (reps, levels+1), totals including all levels run to
    extinction or the cap, extinct flags).
    """
    rng = as_generator(rng)
    counts = np.zeros((reps, levels + 1), dtype=np.int64)
    counts[:, 0] = 1
    for k in range(1, levels + 1):
        counts[:, k] = rng.poisson(mean * counts[:, k - 1])
    alive = counts[:, levels].copy()
    totals = counts.sum(axis=1)
    extra_levels = 0
    while alive.any() and extra_levels < 10_000:
        alive = rng.poisson(mean * alive)
        totals += alive
        extra_levels += 1
    return counts, totals, alive == 0


def spatial_branching(model: ConnectionModel, t: float, root_mark: float,
                      schedule: GenerationSchedule, limits: ExploreLimits | None = None,
                      rng=None, max_levels: int = 1000) -> BranchingRun:
    """One run of the spatial branching pair (W^{v,h}, W~^{v,h}).

    Every particle x of level k spawns the h(x)-th generation of a fresh
    independent cluster exploration rooted at x; the tilde process counts all
    of V^{x!}_{<= h(x)} instead.  For h == 1 the two are identical pathwise.
    """
    rng = as_generator(rng)
    marks = np.asarray([float(root_mark)])
    gen_sizes, tilde = [1], [1]
    truncated = False
    for _ in range(max_levels):
        if marks.size == 0:
            break
        next_marks = []
        tilde_inc = 0
        for m in marks:
            h = schedule.depth(m)
            lim = ExploreLimits(
                max_points=limits.max_points if limits else 1_000_000,
                max_generations=h,
                max_radius=limits.max_radius if limits else math.inf,
            )
            batch = explore_stats(model, t, np.asarray([m]), lim, rng,
                                  record_k=h + 1, collect_final=True)
            if batch.reason[0] == 1:  # ran into max_points
                truncated = True
            offsets, flat = batch.final_marks
            next_marks.append(flat[offsets[0]: offsets[1]])
            tilde_inc += int(batch.sizes[0]) - 1
        marks = np.concatenate(next_marks) if next_marks else np.empty(0)
        gen_sizes.append(int(marks.size))
        tilde.append(tilde_inc)
    else:
        truncated = True
    extinct = marks.size == 0
    return BranchingRun(gen_sizes, tilde, extinct=extinct, truncated=truncated)


@dataclass
class BranchingBatch:
    """Replicated spatial branching totals for a constant schedule h == n."""

    n: int
    levels: np.ndarray        # (reps, k_max+1): |W^{v,n}_k|
    tilde_levels: np.ndarray  # (reps, k_max+1): |W~^{v,n}_k|
    total: np.ndarray         # |W^{v,n}| run to extinction (or cap)
    tilde_total: np.ndarray   # |W~^{v,n}|
    extinct: np.ndarray
    truncated: np.ndarray

    def cumulative(self, k: int) -> np.ndarray:
        return self.levels[:, : k + 1].sum(axis=1)

    def tilde_cumulative(self, k: int) -> np.ndarray:
        return self.tilde_levels[:, : k + 1].sum(axis=1)


def spatial_branching_batch(model: ConnectionModel, t: float, root_mark: float,
                            n: int, reps: int, k_levels: int, rng=None,
                            max_levels: int = 400,
                            max_points_per_particle: int = 1_000_000,
                            max_live_particles: int = 20_000_000) -> BranchingBatch:
    """Replicated (W^{v,n}, W~^{v,n}) totals via batched explorations.

    Level counts are recorded for k <= k_levels; the process itself runs to
    extinction (or max_levels / max_live_particles, flagged truncated --
    supercritical inputs explode and get cut off rather than looping forever).
    """
    if n < 1 or k_levels < 0:
        raise ValueError("need n >= 1 and k_levels >= 0")
    rng = as_generator(rng)
    levels = np.zeros((reps, k_levels + 1), dtype=np.int64)
    tilde_levels = np.zeros((reps, k_levels + 1), dtype=np.int64)
    levels[:, 0] = 1
    tilde_levels[:, 0] = 1
    total = np.ones(reps, dtype=np.int64)
    tilde_total = np.ones(reps, dtype=np.int64)
    truncated = np.zeros(reps, dtype=bool)

    rep_ids = np.arange(reps, dtype=np.int64)
    marks = np.full(reps, float(root_mark))
    lim = ExploreLimits(max_points=max_points_per_particle, max_generations=n)
    level = 0
    while marks.size and level < max_levels:
        level += 1
        batch = explore_stats(model, t, marks, lim, rng, record_k=n + 1,
                              collect_final=True)
        hit_cap = batch.reason == 1  # particle exploration ran into max_points
        if hit_cap.any():
            truncated[np.unique(rep_ids[hit_cap])] = True
        offsets, flat = batch.final_marks
        child_counts = np.diff(offsets)
        np.add.at(total, rep_ids, child_counts)
        np.add.at(tilde_total, rep_ids, batch.sizes - 1)
        if level <= k_levels:
            np.add.at(levels[:, level], rep_ids, child_counts)
            np.add.at(tilde_levels[:, level], rep_ids, batch.sizes - 1)
        rep_ids = np.repeat(rep_ids, child_counts)
        marks = flat
        if marks.size > max_live_particles:
            break
    if marks.size:
        truncated |= np.isin(np.arange(reps), np.unique(rep_ids))
    extinct = ~truncated
    return BranchingBatch(n, levels, tilde_levels, total, tilde_total, extinct, truncated)


# ---------------------------------------------------------------------------
# dominance testing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DominanceVerdict:
    name: str
    consistent: bool
    max_gap: float       # max over x of F_B(x) - F_A(x); negative is comfortable
    band: float
    n_a: int
    n_b: int

    def __str__(self):
        word = "consistent" if self.consistent else "VIOLATED"
        return f"{self.name}: {word} (gap={self.max_gap:.4g}, band={self.band:.4g})"


def dominance_test(sample_a, sample_b, level: float = 1e-3,
                   name: str = "A<=st B") -> DominanceVerdict:
    """One-sided check that A <=_st B fails to be contradicted by the data.

    A <=_st B means F_A >= F_B pointwise; "violated" requires the empirical
    CDF of A to dip below that of B by more than the joint one-sided DKW band
    at the given level.  Consistency is never a proof of dominance.
    """
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("dominance_test needs nonempty samples")
    grid = np.unique(np.concatenate([a, b]))
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    gap = float(np.max(fb - fa))
    eps_a = math.sqrt(math.log(2.0 / level) / (2.0 * a.size))
    eps_b = math.sqrt(math.log(2.0 / level) / (2.0 * b.size))
    band = eps_a + eps_b
    return DominanceVerdict(name, gap <= band, gap, band, a.size, b.size)


@dataclass
class DominationReport:
    t: float
    n: int
    k: int
    reps: int
    verdicts: list = field(default_factory=list)

    @property
    def all_consistent(self) -> bool:
        return all(v.consistent for v in self.verdicts)

    def __str__(self):
        head = f"domination suite t={self.t:.6g} n={self.n} k={self.k} reps={self.reps}"
        return "\n".join([head] + ["  " + str(v) for v in self.verdicts])


def domination_suite(model: ConnectionModel, t: float, v_mark: float, n: int, k: int,
                     reps: int, rng=None, level: float = 1e-3,
                     degree_sup: float | None = None) -> DominationReport:
    """Statistical check of the five-ordering domination chain.

    |V_n| <=st |W^{v,1}_n| <=st W_n, |W^{v,1}_{<=n}| <=st W_{<=n},
    |V_{<=kn}| <=st |W~^{v,n}_{<=k}|, and |V| <=st |W~^{v,n}| (the last needs
    an almost-surely finite branching total, so subcritical inputs only).
    Per-comparison level is Bonferroni-split from `level`.
    """
    rng = as_generator(rng)
    if degree_sup is None:
        degree_sup = model.degree_sup()
    mu = t * degree_sup
    if mu >= 1.0:
        raise ValueError(
            f"t * D*_phi = {mu:.3g} >= 1: the branching totals are not a.s. finite; "
            "domination_suite requires subcritical input")
    per_level = level / 5.0

    v_batch = explore_stats(model, t, np.full(reps, v_mark), None, rng,
                            record_k=max(n, k * n) + 1)
    w1 = spatial_branching_batch(model, t, v_mark, 1, reps, n, rng)
    wn = spatial_branching_batch(model, t, v_mark, n, reps, k, rng)
    gw_counts, gw_totals, _ = gw_poisson_batch(mu, reps, n, rng)

    if v_batch.truncated.any() or w1.truncated.any() or wn.truncated.any():
        raise RuntimeError("censored runs in the domination suite; increase limits")

    verdicts = [
        dominance_test(v_batch.gen_sizes[:, n], w1.levels[:, n], per_level,
                       name=f"|V_{n}| <=st |W^(v,1)_{n}|"),
        dominance_test(w1.levels[:, n], gw_counts[:, n], per_level,
                       name=f"|W^(v,1)_{n}| <=st W_{n}"),
        dominance_test(w1.cumulative(n), gw_counts[:, : n + 1].sum(axis=1), per_level,
                       name=f"|W^(v,1)_<={n}| <=st W_<={n}"),
        dominance_test(v_batch.cumulative_sizes(k * n), wn.tilde_cumulative(k), per_level,
                       name=f"|V_<={k * n}| <=st |W~^(v,{n})_<={k}|"),
        dominance_test(v_batch.sizes, wn.tilde_total, per_level,
                       name=f"|V| <=st |W~^(v,{n})|"),
    ]
    return DominationReport(t, n, k, reps, verdicts)


def lambda_monotonicity_check(model: ConnectionModel, t1: float, t2: float, m: int,
                              v_mark: float, reps: int, rng=None,
                              level: float = 1e-3) -> DominanceVerdict:
    """Check |V_m| at t1 <=_st |V_m| at t2 for t1 <= t2, m in {1, 2} only.

    Monotonicity of higher generations in the intensity is an open question;
    m >= 3 is refused rather than tested.
    """
    if m not in (1, 2):
        raise ValueError(
            "generation monotonicity in the intensity is only known for m in {1, 2}; "
            f"m={m} is an open question and the check refuses to report evidence")
    if t1 > t2:
        raise ValueError("need t1 <= t2")
    rng = as_generator(rng)
    lim = ExploreLimits(max_generations=m)
    b1 = explore_stats(model, t1, np.full(reps, v_mark), lim, rng, record_k=m + 1)
    b2 = explore_stats(model, t2, np.full(reps, v_mark), lim, rng, record_k=m + 1)
    return dominance_test(b1.gen_sizes[:, m], b2.gen_sizes[:, m], level,
                          name=f"|V_{m}|(t={t1:.4g}) <=st |V_{m}|(t={t2:.4g})")
