"""Weather-driven energy consumption forecasting for data centers.

Linear models fitted by the normal equation, pruned with p-value backward
elimination and scored by the coefficient of determination.
"""

from weatherwatt.errors import (
    ConfigError,
    ConvergenceError,
    DegenerateTarget,
    EliminationAborted,
    IngestError,
    InputError,
    NumericalError,
    SingularMatrix,
    WeatherWattError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DegenerateTarget",
    "EliminationAborted",
    "IngestError",
    "InputError",
    "NumericalError",
    "SingularMatrix",
    "WeatherWattError",
]
