"""Stochastic projection of age-specific mortality and fertility rates.

Turns probabilistic trajectories of life expectancy at birth and total
fertility into trajectories of age-specific death rates and fertility
patterns.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    AgeGrid,
    MortalitySchedule,
    MortalitySurface,
    PasfrPattern,
    TrajectoryBundle,
    VitalRatesError,
)
from .life_table import build_life_table, e0_from_mx  # noqa: E402

__all__ = [
    "AgeGrid",
    "MortalitySchedule",
    "MortalitySurface",
    "PasfrPattern",
    "TrajectoryBundle",
    "VitalRatesError",
    "build_life_table",
    "e0_from_mx",
    "__version__",
]
