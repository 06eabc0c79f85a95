"""Geometry of the simulation window: d-torus / free box, marked points,
distance and diameter functionals, and a spatial hash grid for range queries.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

TORUS = "torus"
FREE = "free"


@dataclass(frozen=True)
class SpaceConfig:
    dimension: int
    box_length: float
    boundary: str = TORUS

    def __post_init__(self):
        if self.dimension < 1 or int(self.dimension) != self.dimension:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension}")
        if not self.box_length > 0:
            raise ValueError(f"box_length must be > 0, got {self.box_length}")
        if self.boundary not in (TORUS, FREE):
            raise ValueError(f"boundary must be 'torus' or 'free', got {self.boundary!r}")

    @property
    def volume(self) -> float:
        return self.box_length ** self.dimension


@dataclass(frozen=True)
class MarkedPoint:
    """Location in [0, L)^d plus a mark; label present iff ghosts are enabled."""

    location: tuple
    mark: float = 0.0
    label: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "location", tuple(float(c) for c in self.location))

    @property
    def dimension(self) -> int:
        return len(self.location)


def _check_dims(a: MarkedPoint, b: MarkedPoint, cfg: SpaceConfig):
    if a.dimension != cfg.dimension or b.dimension != cfg.dimension:
        raise ValueError(
            f"dimension mismatch: points have dims {a.dimension}, {b.dimension}, "
            f"space has {cfg.dimension}"
        )


def displacement(a: MarkedPoint, b: MarkedPoint, cfg: SpaceConfig) -> np.ndarray:
    """Vector from a to b, minimal-image per coordinate under the torus."""
    _check_dims(a, b, cfg)
    return delta_array(np.asarray(a.location), np.asarray(b.location), cfg)


def delta_array(xa: np.ndarray, xb: np.ndarray, cfg: SpaceConfig) -> np.ndarray:
    d = np.asarray(xb, dtype=float) - np.asarray(xa, dtype=float)
    if cfg.boundary == TORUS:
        L = cfg.box_length
        d = d - L * np.round(d / L)
    return d


def distance(a: MarkedPoint, b: MarkedPoint, cfg: SpaceConfig) -> float:
    """Euclidean distance; per-coordinate difference is min(|Δ|, L−|Δ|) on the torus."""
    return float(np.linalg.norm(displacement(a, b, cfg)))


def distance_matrix(locs_a: np.ndarray, locs_b: np.ndarray, cfg: SpaceConfig) -> np.ndarray:
    """Pairwise distances between two location arrays, shape (len(a), len(b))."""
    d = delta_array(locs_a[:, None, :], locs_b[None, :, :], cfg)
    return np.sqrt(np.sum(d * d, axis=-1))


def _as_loc_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points
    return np.asarray([p.location for p in points], dtype=float)


def set_diameter(points, cfg: SpaceConfig) -> float:
    """Max pairwise distance; 0 on the empty or singleton set."""
    locs = _as_loc_array(points)
    if len(locs) <= 1:
        return 0.0
    return float(distance_matrix(locs, locs, cfg).max())


def max_distance_to_root(root, points, cfg: SpaceConfig) -> float:
    """Max distance from the root to the point set; 0 on the empty set."""
    locs = _as_loc_array(points)
    if len(locs) == 0:
        return 0.0
    r = np.asarray(root.location if isinstance(root, MarkedPoint) else root, dtype=float)
    return float(distance_matrix(r[None, :], locs, cfg).max())


@dataclass
class GridIndex:
    """Spatial hash; query(center, radius) returns a superset of all points in range.

    Cell width is at least `cell_size`; on the torus the axis is divided into an
    integer number of cells so wrapped queries stay exact.
    """

    cfg: SpaceConfig
    cell_size: float
    locations: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    _cells: dict = field(default_factory=dict)
    _ncells: int = 0
    _width: float = 0.0

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be > 0")
        if self.cfg.boundary == TORUS:
            self._ncells = max(1, int(self.cfg.box_length / self.cell_size))
            self._width = self.cfg.box_length / self._ncells
        else:
            self._ncells = 0
            self._width = self.cell_size

    @classmethod
    def build(cls, points, cfg: SpaceConfig, cell_size: float) -> "GridIndex":
        idx = cls(cfg=cfg, cell_size=cell_size)
        locs = _as_loc_array(points)
        idx.locations = locs.reshape(len(locs), cfg.dimension)
        for i, loc in enumerate(idx.locations):
            idx._cells.setdefault(idx._cell_of(loc), []).append(i)
        return idx

    def _cell_of(self, loc) -> tuple:
        c = np.floor(np.asarray(loc) / self._width).astype(int)
        if self.cfg.boundary == TORUS:
            c = np.mod(c, self._ncells)
        return tuple(c)

    def query(self, center, radius: float) -> np.ndarray:
        """Indices of a superset of all points within `radius` of `center`."""
        if not self._cells:
            return np.empty(0, dtype=int)
        center = np.asarray(
            center.location if isinstance(center, MarkedPoint) else center, dtype=float
        )
        span = int(math.ceil(radius / self._width))
        base = np.floor(center / self._width).astype(int)
        out: list[int] = []
        if self.cfg.boundary == TORUS:
            per_axis = []
            for k in base:
                lo, hi = k - span, k + span
                if hi - lo + 1 >= self._ncells:
                    per_axis.append(range(self._ncells))
                else:
                    per_axis.append([(j % self._ncells) for j in range(lo, hi + 1)])
            seen = set()
            for cell in itertools.product(*per_axis):
                if cell in seen:
                    continue
                seen.add(cell)
                out.extend(self._cells.get(cell, ()))
        else:
            rngs = [range(k - span, k + span + 1) for k in base]
            for cell in itertools.product(*rngs):
                out.extend(self._cells.get(cell, ()))
        return np.asarray(sorted(out), dtype=int)
