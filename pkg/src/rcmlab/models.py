"""Connection-function catalog for marked random connection models.

Each model knows its connection function phi(x,p,q) in [0,1], the pair kernel
d_phi(p,q) = integral of phi over displacements, the degree functional
D(p) = integral of d_phi(p,.) against the mark distribution, and exact
samplers for child marks (density proportional to d_phi(p,.) dQ) and for
displacements (density phi(.,p,q)/d_phi(p,q)).  Exactness of these samplers
is what makes the lazy cluster exploration exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _integrate
from scipy import special as _special
from scipy import stats as _sps

from .stats import KernelEstimate


class ModelSupportError(RuntimeError):
    """Raised when an operation refuses a model configuration."""


class MarkSupportError(ValueError):
    """Raised when a mark lies outside the model's mark space."""


def unit_ball_volume(d: int) -> float:
    """kappa_d, the Lebesgue volume of the d-dimensional unit ball."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def _power_integral(a, b, e):
    """Integral of q^e over (a, b), elementwise; handles e == -1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.isclose(e, -1.0):
        return np.log(b / a)
    return (b ** (e + 1.0) - a ** (e + 1.0)) / (e + 1.0)


def sample_in_ball(radii, dim, rng):
    """Uniform points in balls of per-row radius `radii`, shape (n, dim)."""
    radii = np.asarray(radii, dtype=float)
    n = radii.shape[0]
    z = rng.standard_normal((n, dim))
    norm = np.linalg.norm(z, axis=1)
    norm[norm == 0] = 1.0
    r = radii * rng.random(n) ** (1.0 / dim)
    return z * (r / norm)[:, None]


# ---------------------------------------------------------------------------
# mark distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkDistribution:
    """Mark law Q.  kind: degenerate | uniform01 | discrete | bounded_custom.

    support_bound is the (known) supremum of the support; None means
    unbounded, which tags models like the Gilbert graph with unbounded radii
    as t_T-trivial.
    """

    kind: str
    value: float = 0.0
    atoms: tuple = ()
    weights: tuple = ()
    sampler: object = None
    support_bound: float | None = None

    def __post_init__(self):
        if self.kind not in ("degenerate", "uniform01", "discrete", "bounded_custom"):
            raise ValueError(f"unknown mark distribution kind {self.kind!r}")
        if self.kind == "discrete":
            w = np.asarray(self.weights, dtype=float)
            if len(self.atoms) == 0 or len(self.atoms) != len(w):
                raise ValueError("discrete mark distribution needs matching atoms/weights")
            if not np.isclose(w.sum(), 1.0):
                raise ValueError("discrete mark weights must sum to 1")
        if self.kind == "bounded_custom" and self.sampler is None:
            raise ValueError("bounded_custom requires a sampler")

    @classmethod
    def degenerate(cls, value: float) -> "MarkDistribution":
        return cls("degenerate", value=float(value), support_bound=float(value))

    @classmethod
    def uniform01(cls) -> "MarkDistribution":
        return cls("uniform01", support_bound=1.0)

    @classmethod
    def discrete(cls, atoms, weights) -> "MarkDistribution":
        return cls(
            "discrete",
            atoms=tuple(float(a) for a in atoms),
            weights=tuple(float(w) for w in weights),
            support_bound=float(max(atoms)),
        )

    @classmethod
    def custom(cls, sampler, support_bound=None) -> "MarkDistribution":
        return cls("bounded_custom", sampler=sampler,
                   support_bound=None if support_bound is None else float(support_bound))

    @property
    def is_degenerate(self) -> bool:
        return self.kind == "degenerate"

    def sample(self, n: int, rng) -> np.ndarray:
        if self.kind == "degenerate":
            return np.full(n, self.value)
        if self.kind == "uniform01":
            return rng.random(n)
        if self.kind == "discrete":
            idx = rng.choice(len(self.atoms), size=n, p=np.asarray(self.weights))
            return np.asarray(self.atoms)[idx]
        return np.asarray(self.sampler(n, rng), dtype=float)

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "degenerate":
            return p == self.value
        if self.kind == "uniform01":
            return (p > 0) & (p < 1)
        if self.kind == "discrete":
            return np.isin(p, np.asarray(self.atoms))
        ok = p >= 0
        if self.support_bound is not None:
            ok &= p <= self.support_bound
        return ok

    def default_grid(self, n: int = 9) -> np.ndarray:
        """Mark grid used for grid-sup approximations of essential suprema."""
        if self.kind == "degenerate":
            return np.array([self.value])
        if self.kind == "discrete":
            return np.asarray(self.atoms, dtype=float)
        if self.kind == "uniform01":
            return np.linspace(0.02, 0.98, n)
        hi = self.support_bound if self.support_bound is not None else 1.0
        return np.linspace(hi / n, hi, n)


# ---------------------------------------------------------------------------
# base model
# ---------------------------------------------------------------------------

class ConnectionModel:
    """Base class; subclasses fill in the closed forms."""

    kind = "abstract"

    def __init__(self, dim: int, mark_dist: MarkDistribution):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.dim = int(dim)
        self.mark_dist = mark_dist
        self.kappa = unit_ball_volume(self.dim)

    # -- connection function ------------------------------------------------

    def pair_radius(self, p, q):
        """Hard support radius of phi(.,p,q) (phi vanishes beyond it)."""
        raise NotImplementedError

    def pair_height(self, p, q):
        """Value of phi inside the support ball (indicator-profile catalog)."""
        return np.broadcast_to(1.0, np.broadcast_shapes(np.shape(p), np.shape(q)))

    def phi(self, dx, p, q):
        """phi(x, p, q) for displacement arrays dx of shape (..., dim)."""
        r = np.linalg.norm(np.asarray(dx, dtype=float), axis=-1)
        return np.where(r <= self.pair_radius(p, q), self.pair_height(p, q), 0.0)

    def d_phi(self, p, q):
        """d_phi(p,q): integral of phi(x,p,q) over x."""
        return self.pair_height(p, q) * self.kappa * self.pair_radius(p, q) ** self.dim

    # -- degree functional ----------------------------------------------------

    def degree(self, p):
        """D((0,p)) = integral of d_phi(p,q) Q(dq); None if no closed form."""
        return None

    def degree_bound(self, p):
        """Upper bound M(p) >= d_phi(p,q) for all q; used by the thinning path."""
        raise NotImplementedError

    def degree_sup(self, grid=None) -> float:
        """sup_p D(p) over the mark grid (exact for monotone catalog models)."""
        if self.t_T_trivial:
            return math.inf
        grid = self.mark_dist.default_grid() if grid is None else np.asarray(grid)
        d = self.degree(grid)
        return float(np.max(d))

    @property
    def t_T_trivial(self) -> bool:
        return False

    @property
    def range_sup(self) -> float:
        """sup over mark pairs of pair_radius; inf for long-range catalogs."""
        raise NotImplementedError

    # -- samplers -------------------------------------------------------------

    def sample_child_marks(self, p, rng):
        """q ~ d_phi(p,.) dQ / D(p), elementwise in p; None if unavailable."""
        return None

    def sample_displacement(self, p, q, rng):
        """x ~ phi(.,p,q)/d_phi(p,q); exact for the indicator-profile catalog."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        d = self.d_phi(p, q)
        if np.any(~np.isfinite(d)) or np.any(d <= 0):
            raise ModelSupportError("sample_displacement needs 0 < d_phi(p,q) < inf")
        return sample_in_ball(self.pair_radius(p, q), self.dim, rng)

    def sample_offspring(self, p, t, rng):
        """Candidate children of parents with marks p for the exploration kernel.

        Returns (parent_index, child_marks, displacements) where each parent i
        independently spawns Poisson(t * D(p_i)) candidates with marks from
        the d_phi(p_i,.)-tilted mark law and displacements from phi/d_phi.
        """
        p = np.asarray(p, dtype=float)
        deg = self.degree(p)
        if deg is not None:
            counts = rng.poisson(t * np.asarray(deg))
            par = np.repeat(np.arange(p.size), counts)
            q = self.sample_child_marks(p[par], rng)
            if q is None:
                par, q = self._offspring_by_thinning(p, par, rng)
        else:
            bound = np.asarray(self.degree_bound(p), dtype=float)
            counts = rng.poisson(t * bound)
            par0 = np.repeat(np.arange(p.size), counts)
            par, q = self._thin_candidates(p, par0, bound, rng)
        delta = self.sample_displacement(p[par], q, rng)
        return par, q, delta

    def _offspring_by_thinning(self, p, par, rng):
        raise ModelSupportError(f"{self.kind}: no child-mark sampler available")

    def _thin_candidates(self, p, par0, bound, rng):
        q0 = self.mark_dist.sample(par0.size, rng)
        accept = rng.random(par0.size) * bound[par0] < self.d_phi(p[par0], q0)
        return par0[accept], q0[accept]

    # -- tails ------------------------------------------------------------------

    def tail_mass_per_mark(self, p, q, r):
        """Integral of phi(x,p,q) over ||x|| > r (closed form, indicator profile)."""
        rad = self.pair_radius(p, q)
        h = self.pair_height(p, q)
        return h * self.kappa * np.clip(rad**self.dim - float(r) ** self.dim, 0.0, None)

    def tail_mass_closed(self, p, r):
        """Closed form of the Q-averaged tail mass, when available."""
        return None

    # -- plumbing ---------------------------------------------------------------

    def check_marks(self, *marks):
        for m in marks:
            if not np.all(self.mark_dist.contains(m)):
                raise MarkSupportError(f"mark {m!r} outside the model's mark space")

    def core_descriptor(self):
        """Flat numeric description for the compiled kernel; None = unsupported."""
        return None

    def _mark_core_fields(self):
        md = self.mark_dist
        table = {"degenerate": 0, "uniform01": 1, "discrete": 2}
        if md.kind not in table:
            return None
        return {
            "mark_kind": table[md.kind],
            "mark_value": md.value,
            "atoms": np.asarray(md.atoms, dtype=float),
            "weights": np.asarray(md.weights, dtype=float),
        }


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

class GilbertModel(ConnectionModel):
    """Spherical Boolean model: phi(x,p,q) = 1{||x|| <= p+q}, radii ~ Q."""

    kind = "gilbert"

    def __init__(self, dim: int, radius_dist: MarkDistribution):
        super().__init__(dim, radius_dist)

    def pair_radius(self, p, q):
        return np.asarray(p, dtype=float) + np.asarray(q, dtype=float)

    def degree(self, p):
        p = np.asarray(p, dtype=float)
        d, md = self.dim, self.mark_dist
        if md.kind == "degenerate":
            return self.kappa * (p + md.value) ** d
        if md.kind == "uniform01":
            return self.kappa * ((p + 1.0) ** (d + 1) - p ** (d + 1)) / (d + 1)
        if md.kind == "discrete":
            a = np.asarray(md.atoms)[:, None]
            w = np.asarray(md.weights)[:, None]
            return self.kappa * np.sum(w * (p[None, :] + a) ** d, axis=0).reshape(p.shape)
        return None

    def degree_bound(self, p):
        b = self.mark_dist.support_bound
        if b is None:
            raise ModelSupportError("gilbert with unbounded radii has no degree bound")
        return self.kappa * (np.asarray(p, dtype=float) + b) ** self.dim

    def sample_child_marks(self, p, rng):
        d, md = self.dim, self.mark_dist
        p = np.asarray(p, dtype=float)
        if md.kind == "degenerate":
            return np.full(p.shape, md.value)
        if md.kind == "uniform01":
            # density prop. to (p+q)^d on (0,1); exact inverse CDF
            u = rng.random(p.shape)
            lo = p ** (d + 1)
            hi = (p + 1.0) ** (d + 1)
            return (lo + u * (hi - lo)) ** (1.0 / (d + 1)) - p
        if md.kind == "discrete":
            a = np.asarray(md.atoms)
            w = np.asarray(md.weights)[None, :] * (p[:, None] + a[None, :]) ** d
            cdf = np.cumsum(w, axis=1)
            u = rng.random(p.size)[:, None] * cdf[:, -1:]
            idx = (u >= cdf).sum(axis=1)
            return a[idx]
        return None  # bounded_custom -> thinning path

    def _offspring_by_thinning(self, p, par, rng):
        # accept a Q-sample q with prob ((p+q)/(p+b))^d; exact since d_phi <= bound
        b = self.mark_dist.support_bound
        q0 = self.mark_dist.sample(par.size, rng)
        accept = rng.random(par.size) < ((p[par] + q0) / (p[par] + b)) ** self.dim
        return par[accept], q0[accept]

    def sample_offspring(self, p, t, rng):
        # bounded_custom radii go through one Poisson(t * bound) + mark thinning
        if self.mark_dist.kind == "bounded_custom":
            p = np.asarray(p, dtype=float)
            bound = self.degree_bound(p)
            counts = rng.poisson(t * bound)
            par0 = np.repeat(np.arange(p.size), counts)
            par, q = self._thin_candidates(p, par0, bound, rng)
            return par, q, self.sample_displacement(p[par], q, rng)
        return super().sample_offspring(p, t, rng)

    def tail_mass_closed(self, p, r):
        d, md = self.dim, self.mark_dist
        p = float(p)
        if md.kind == "degenerate":
            return float(self.tail_mass_per_mark(p, md.value, r))
        if md.kind == "discrete":
            return float(sum(w * self.tail_mass_per_mark(p, a, r)
                             for a, w in zip(md.atoms, md.weights)))
        if md.kind == "uniform01":
            qs = min(max(r - p, 0.0), 1.0)
            if qs >= 1.0:
                return 0.0
            grow = ((p + 1.0) ** (d + 1) - (p + qs) ** (d + 1)) / (d + 1)
            return self.kappa * (grow - r**d * (1.0 - qs))
        return None

    @property
    def t_T_trivial(self) -> bool:
        return self.mark_dist.support_bound is None

    @property
    def range_sup(self) -> float:
        b = self.mark_dist.support_bound
        return math.inf if b is None else 2.0 * b

    def core_descriptor(self):
        mk = self._mark_core_fields()
        if mk is None:
            return None
        return {"kind": 0, "dim": self.dim, "eps": 0.0, "delta": 0.0,
                "kernel_code": 0, "level": 1.0, "range": 0.0, **mk}


class WeightedModel(ConnectionModel):
    """Weight-dependent RCM with indicator profile: phi = 1{g(p,q) ||x||^d <= 1}.

    Marks are uniform on (0,1).  Kernels: "max" g=(p v q)^eps,
    "sum" g=(p+q)^eps, "pref" g=(p^q)^(-delta) (p v q)^eps.
    """

    kind = "weighted"
    _KERNELS = ("max", "sum", "pref")

    def __init__(self, dim: int, epsilon: float, delta: float = 0.0,
                 kernel: str = "max", profile: str = "indicator"):
        if kernel not in self._KERNELS:
            raise ValueError(f"kernel must be one of {self._KERNELS}")
        if profile != "indicator":
            raise ValueError("catalog weighted model supports the indicator profile only")
        if epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if kernel == "pref" and delta <= 0:
            raise ValueError("pref kernel needs delta > 0")
        super().__init__(dim, MarkDistribution.uniform01())
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.kernel = kernel

    def g(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.kernel == "max":
            return np.maximum(p, q) ** self.epsilon
        if self.kernel == "sum":
            return (p + q) ** self.epsilon
        return np.minimum(p, q) ** (-self.delta) * np.maximum(p, q) ** self.epsilon

    def pair_radius(self, p, q):
        return self.g(p, q) ** (-1.0 / self.dim)

    def d_phi(self, p, q):
        return self.kappa / self.g(p, q)

    def degree(self, p):
        p = np.asarray(p, dtype=float)
        e = self.epsilon
        if self.kernel == "max":
            val = p ** (1.0 - e) + _power_integral(p, 1.0, -e)
        elif self.kernel == "sum":
            val = _power_integral(p, p + 1.0, -e)
        else:
            val = p ** (-e) * p ** (1.0 + self.delta) / (1.0 + self.delta) \
                + p ** self.delta * _power_integral(p, 1.0, -e)
        return self.kappa * val

    def sample_child_marks(self, p, rng):
        """Exact piecewise-power inversion of the density prop. to 1/g(p,.)."""
        p = np.asarray(p, dtype=float)
        e = self.epsilon
        u = rng.random(p.shape)
        if self.kernel == "sum":
            # density (p+q)^(-e): single shifted power segment
            lo = p ** (1.0 - e)
            hi = (p + 1.0) ** (1.0 - e)
            return (lo + u * (hi - lo)) ** (1.0 / (1.0 - e)) - p
        if self.kernel == "max":
            m1 = p ** (1.0 - e)                      # flat piece q in (0,p)
            m2 = _power_integral(p, 1.0, -e)         # q^(-e) piece on (p,1)
        else:
            m1 = p ** (-e) * p ** (1.0 + self.delta) / (1.0 + self.delta)
            m2 = p ** self.delta * _power_integral(p, 1.0, -e)
        total = m1 + m2
        take1 = u * total < m1
        u2 = rng.random(p.shape)
        out = np.empty_like(p)
        if self.kernel == "max":
            out[take1] = u2[take1] * p[take1]
        else:
            # density prop. to q^delta on (0,p)
            out[take1] = p[take1] * u2[take1] ** (1.0 / (1.0 + self.delta))
        t2 = ~take1
        if np.isclose(e, 1.0):
            # density 1/q on (p,1): q = p^(1-u)
            out[t2] = p[t2] ** (1.0 - u2[t2])
        else:
            lo = p[t2] ** (1.0 - e)
            vals = lo + u2[t2] * (1.0 - lo)
            out[t2] = vals ** (1.0 / (1.0 - e))
        return out

    def tail_mass_closed(self, p, r):
        if self.kernel != "max":
            return None
        # positive part region: (p v q)^eps < r^(-d)
        p, r, e, d = float(p), float(r), self.epsilon, self.dim
        if r <= 0:
            return float(self.degree(np.asarray([p]))[0])
        c = r ** (-d / e)
        if p >= c:
            return 0.0
        hi = min(c, 1.0)
        flat = p ** (1.0 - e) if p <= hi else hi * p ** (-e)
        grow = _power_integral(p, hi, -e) if hi > p else 0.0
        return float(self.kappa * (flat + grow) - self.kappa * r**d * hi)

    @property
    def t_T_trivial(self) -> bool:
        if self.kernel == "pref":
            return self.epsilon > 1.0 + self.delta
        return self.epsilon >= 1.0

    @property
    def range_sup(self) -> float:
        return math.inf

    def core_descriptor(self):
        codes = {"max": 0, "sum": 1, "pref": 2}
        return {"kind": 1, "dim": self.dim, "eps": self.epsilon, "delta": self.delta,
                "kernel_code": codes[self.kernel], "level": 1.0, "range": 0.0,
                "mark_kind": 1, "mark_value": 0.0,
                "atoms": np.empty(0), "weights": np.empty(0)}


class UnmarkedIndicatorModel(ConnectionModel):
    """Unmarked phi(x) = level * 1{||x|| <= R}."""

    kind = "unmarked_indicator"

    def __init__(self, dim: int, range_: float, level: float = 1.0):
        if not 0 < level <= 1:
            raise ValueError("level must be in (0,1]")
        if not range_ > 0:
            raise ValueError("range must be > 0")
        super().__init__(dim, MarkDistribution.degenerate(0.0))
        self.range_ = float(range_)
        self.level = float(level)

    def pair_radius(self, p, q):
        return np.broadcast_to(self.range_, np.broadcast_shapes(np.shape(p), np.shape(q)))

    def pair_height(self, p, q):
        return np.broadcast_to(self.level, np.broadcast_shapes(np.shape(p), np.shape(q)))

    def degree(self, p):
        return np.broadcast_to(self.level * self.kappa * self.range_**self.dim,
                               np.shape(np.asarray(p, dtype=float)))

    def sample_child_marks(self, p, rng):
        return np.zeros(np.shape(p))

    def tail_mass_closed(self, p, r):
        return float(self.tail_mass_per_mark(0.0, 0.0, r))

    @property
    def range_sup(self) -> float:
        return self.range_

    def core_descriptor(self):
        return {"kind": 2, "dim": self.dim, "eps": 0.0, "delta": 0.0, "kernel_code": 0,
                "level": self.level, "range": self.range_,
                "mark_kind": 0, "mark_value": 0.0,
                "atoms": np.empty(0), "weights": np.empty(0)}


class UnmarkedCustomModel(ConnectionModel):
    """Unmarked radial phi with a declared envelope.

    envelope: phi(r) <= const * 1{r <= range} + tail(r), tail one of
    None, ("exp", coef, rate) or ("poly", coef, power) with power < -dim.
    Displacements are sampled exactly by rejection against the envelope.
    """

    kind = "unmarked_custom"

    def __init__(self, dim: int, phi_radial, envelope_const: float,
                 envelope_range: float, tail=None):
        super().__init__(dim, MarkDistribution.degenerate(0.0))
        if not 0 < envelope_const <= 1:
            raise ValueError("envelope const must be in (0,1]")
        self.phi_radial = phi_radial
        self.c = float(envelope_const)
        self.R = float(envelope_range)
        self.tail = tail
        if tail is not None:
            kind, coef, parm = tail
            if kind == "poly" and parm >= -dim:
                raise ValueError("polynomial tail needs power < -dim for finite mass")
            if kind not in ("exp", "poly"):
                raise ValueError("tail kind must be 'exp' or 'poly'")
        self._d_phi = self._quadrature_mass()

    def _surface(self) -> float:
        return self.dim * self.kappa

    def _quadrature_mass(self) -> float:
        val, _ = _integrate.quad(
            lambda r: self.phi_radial(r) * r ** (self.dim - 1), 0.0, self._tail_top(),
            limit=200,
        )
        return self._surface() * val

    def _tail_top(self) -> float:
        if self.tail is None:
            return self.R
        if self.tail[0] == "exp":
            return self.R + 60.0 / self.tail[2]
        return self.R * 1e6

    def _envelope(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where(r <= self.R, self.c, 0.0)
        if self.tail is not None:
            kind, coef, parm = self.tail
            tail = coef * np.exp(-parm * r) if kind == "exp" else coef * r**parm
            out = np.where(r > self.R, tail, out)
        return out

    def phi(self, dx, p, q):
        r = np.linalg.norm(np.asarray(dx, dtype=float), axis=-1)
        return np.asarray(self.phi_radial(r), dtype=float)

    def pair_radius(self, p, q):
        top = self._tail_top()
        return np.broadcast_to(top, np.broadcast_shapes(np.shape(p), np.shape(q)))

    def d_phi(self, p, q):
        return np.broadcast_to(self._d_phi, np.broadcast_shapes(np.shape(p), np.shape(q)))

    def degree(self, p):
        return np.broadcast_to(self._d_phi, np.shape(np.asarray(p, dtype=float)))

    def sample_child_marks(self, p, rng):
        return np.zeros(np.shape(p))

    def _envelope_masses(self):
        ball = self.c * self.kappa * self.R**self.dim
        if self.tail is None:
            return ball, 0.0
        kind, coef, parm = self.tail
        if kind == "exp":
            tail = coef * self._surface() * parm ** (-self.dim) \
                * _special.gamma(self.dim) * _special.gammaincc(self.dim, parm * self.R)
        else:
            tail = coef * self._surface() * self.R ** (parm + self.dim) / (-(parm + self.dim))
        return ball, tail

    def _sample_envelope_radius(self, n, rng):
        ball, tail = self._envelope_masses()
        pick = rng.random(n) * (ball + tail) < ball
        r = np.empty(n)
        r[pick] = self.R * rng.random(pick.sum()) ** (1.0 / self.dim)
        m = (~pick).sum()
        if m:
            kind, coef, parm = self.tail
            if kind == "exp":
                # radial density prop. to r^(d-1) e^(-parm r) on (R, inf): truncated Gamma
                glow = _sps.gamma.cdf(self.R, a=self.dim, scale=1.0 / parm)
                u = glow + rng.random(m) * (1.0 - glow)
                r[~pick] = _sps.gamma.ppf(u, a=self.dim, scale=1.0 / parm)
            else:
                a = parm + self.dim  # density prop. to r^(a-1), a < 0
                r[~pick] = self.R * rng.random(m) ** (1.0 / a)
        return r

    def sample_displacement(self, p, q, rng):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        n = p.size
        out = np.empty((n, self.dim))
        todo = np.arange(n)
        while todo.size:
            r = self._sample_envelope_radius(todo.size, rng)
            acc = rng.random(todo.size) * self._envelope(r) < self.phi_radial(r)
            hit = todo[acc]
            z = rng.standard_normal((hit.size, self.dim))
            nz = np.linalg.norm(z, axis=1)
            nz[nz == 0] = 1.0
            out[hit] = z * (r[acc] / nz)[:, None]
            todo = todo[~acc]
        return out

    def tail_mass_per_mark(self, p, q, r):
        val, _ = _integrate.quad(
            lambda s: self.phi_radial(s) * s ** (self.dim - 1), float(r), self._tail_top(),
            limit=200,
        )
        return self._surface() * val

    def tail_mass_closed(self, p, r):
        return float(self.tail_mass_per_mark(0.0, 0.0, r))

    @property
    def range_sup(self) -> float:
        return self.R if self.tail is None else math.inf

    @property
    def t_T_trivial(self) -> bool:
        return False


# ---------------------------------------------------------------------------
# spec operations
# ---------------------------------------------------------------------------

def phi(model: ConnectionModel, displacement, p, q) -> float:
    """Point evaluation of the connection function with mark validation."""
    model.check_marks(p, q)
    return float(model.phi(np.asarray(displacement, dtype=float), p, q))


def degree_functional(model: ConnectionModel, p, n_mc: int, rng) -> KernelEstimate:
    """D((0,p)) with standard error; closed form used when available."""
    deg = model.degree(np.atleast_1d(np.asarray(p, dtype=float)))
    if deg is not None:
        return KernelEstimate.exact(float(deg[0]))
    if model.mark_dist.support_bound is None and model.range_sup == math.inf:
        raise ModelSupportError("cannot truncate: model declares no range bound or tail envelope")
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    q = model.mark_dist.sample(n_mc, rng)
    vals = model.d_phi(np.full(n_mc, float(p)), q)
    return KernelEstimate.from_samples(vals)


def sample_displacement(model: ConnectionModel, p, q, rng) -> np.ndarray:
    """One displacement with density phi(.,p,q)/d_phi(p,q)."""
    model.check_marks(p, q)
    return model.sample_displacement([p], [q], rng)[0]


def tail_mass(model: ConnectionModel, p, r, n_mc: int, rng) -> KernelEstimate:
    """Q-averaged tail mass of phi(.,p,.) beyond radius r."""
    closed = model.tail_mass_closed(p, r)
    if closed is not None:
        method = "quadrature" if model.kind == "unmarked_custom" else "closed_form"
        se = 0.0
        return KernelEstimate(float(closed), se, 0, method=method)
    q = model.mark_dist.sample(n_mc, rng)
    vals = model.tail_mass_per_mark(np.full(n_mc, float(p)), q, r)
    return KernelEstimate.from_samples(vals)


def validate_connection_model(model: ConnectionModel, rng, n_checks: int = 256) -> None:
    """Structural validation: phi in [0,1], symmetric, zero beyond pair_radius."""
    p = model.mark_dist.sample(n_checks, rng)
    q = model.mark_dist.sample(n_checks, rng)
    rad = np.asarray(model.pair_radius(p, q), dtype=float)
    scale = np.where(np.isfinite(rad) & (rad > 0), rad, 1.0)
    dx = rng.standard_normal((n_checks, model.dim)) * scale[:, None]
    vals = np.asarray(model.phi(dx, p, q), dtype=float)
    if np.any(vals < 0) or np.any(vals > 1):
        raise ModelSupportError("phi takes values outside [0,1]")
    rev = np.asarray(model.phi(-dx, q, p), dtype=float)
    if not np.allclose(vals, rev, atol=1e-12):
        raise ModelSupportError("phi is not symmetric under (x,p,q) -> (-x,q,p)")
    far = dx * (1.5 * scale / np.maximum(np.linalg.norm(dx, axis=1), 1e-300))[:, None]
    if np.isfinite(rad).all():
        vfar = np.asarray(model.phi(far, p, q), dtype=float)
        if np.any(vfar[np.linalg.norm(far, axis=1) > rad] > 0):
            raise ModelSupportError("phi is positive beyond its declared range bound")
