"""Linear barycentric coding model toolkit.

Transport-map based analysis and synthesis of probability measures:
entropic and exact optimal transport, simplex-constrained coordinate
estimation, Gaussian closed forms, capacity constructions and image
reconstruction pipelines.
"""

from lotkit.errors import (
    BudgetError,
    ConvergenceError,
    IncompatibleBaseError,
    LotkitError,
    NotPSDError,
    NumericalError,
)
from lotkit.measures import (
    CoefficientMeasure,
    DiscreteMeasure,
    MapOnSample,
    SimplexWeights,
    combine_maps,
    pushforward,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "CoefficientMeasure",
    "ConvergenceError",
    "DiscreteMeasure",
    "IncompatibleBaseError",
    "LotkitError",
    "MapOnSample",
    "NotPSDError",
    "NumericalError",
    "SimplexWeights",
    "combine_maps",
    "pushforward",
]
