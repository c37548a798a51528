"""Serrin-type boundary value problems on space forms and checks of their integral identities."""

from .exceptions import (
    ConfigError,
    DegenerateAnnulus,
    DegenerateDenominator,
    DegenerateSphere,
    HypothesisNotMet,
    InadmissibleDomain,
    MeshFailure,
    MultipleBoundaries,
    NewtonDivergence,
    NonConvergence,
    NotAnnular,
    SerrinLabError,
    SingularStiffness,
)
from .geometry import Annulus, Ball, SpaceForm
from .nonlinearity import Nonlinearity

__version__ = "0.1.0"

__all__ = [
    "SpaceForm",
    "Ball",
    "Annulus",
    "Nonlinearity",
    "SerrinLabError",
    "InadmissibleDomain",
    "DegenerateSphere",
    "DegenerateAnnulus",
    "NonConvergence",
    "NewtonDivergence",
    "SingularStiffness",
    "MeshFailure",
    "HypothesisNotMet",
    "NotAnnular",
    "MultipleBoundaries",
    "DegenerateDenominator",
    "ConfigError",
]
