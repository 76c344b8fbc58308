"""Rigid 2D slice registration with a deep Q-network agent."""
from .errors import (
    BoundsError,
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    InputError,
    IOFailure,
    NumericError,
    RLAlignError,
    StateError,
)
from .imgcore import RigidTransform2D, crop, diff, normalize, resize, warp
from .simkit import SimilarityConfig, correlation, dissimilarity, nmi, ssim

__version__ = "0.1.0"
