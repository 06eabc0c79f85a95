"""rcmlab: sampling, bounds and statistical certification for Poisson random
connection models on the d-torus and in free space."""

from ._backend import backend_name
from .geometry import FREE, TORUS, GridIndex, MarkedPoint, SpaceConfig, distance, max_distance_to_root, set_diameter
from .models import (
    ConnectionModel,
    GilbertModel,
    MarkDistribution,
    ModelSupportError,
    UnmarkedCustomModel,
    UnmarkedIndicatorModel,
    WeightedModel,
)
from .rng import RngStream
from .stats import KernelEstimate, StreamingMoments

__version__ = "0.1.0"

__all__ = [
    "FREE",
    "TORUS",
    "ConnectionModel",
    "GilbertModel",
    "GridIndex",
    "KernelEstimate",
    "MarkDistribution",
    "MarkedPoint",
    "ModelSupportError",
    "RngStream",
    "SpaceConfig",
    "StreamingMoments",
    "UnmarkedCustomModel",
    "UnmarkedIndicatorModel",
    "WeightedModel",
    "backend_name",
    "distance",
    "max_distance_to_root",
    "set_diameter",
    "__version__",
]
