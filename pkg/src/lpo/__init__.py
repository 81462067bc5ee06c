"""Light-spot placement optimization against black-box face oracles."""

from .oracle import Detection, OracleHandle, best_face, make_synthetic
from .raster import FaceBox, ImageRaster
from .search import Placement, SearchConfig, SearchOutcome
from .spotmodel import SpotModel, SpotParams

__version__ = "0.1.0"

__all__ = [
    "Detection",
    "FaceBox",
    "ImageRaster",
    "OracleHandle",
    "Placement",
    "SearchConfig",
    "SearchOutcome",
    "SpotModel",
    "SpotParams",
    "best_face",
    "make_synthetic",
    "__version__",
]
