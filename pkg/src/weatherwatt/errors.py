"""Exception hierarchy.

User/config problems derive from ``InputError`` and numerical failures from
``NumericalError`` so the CLI can map them onto exit codes 1 and 2.
"""


class WeatherWattError(Exception):
    pass


class InputError(WeatherWattError):
    """Bad file, bad schema, bad flag value."""


class ConfigError(InputError):
    pass


class IngestError(InputError):
    pass


class NumericalError(WeatherWattError):
    pass


class SingularMatrix(NumericalError):
    pass


class DegenerateTarget(NumericalError):
    """Target has zero variance, so the coefficient of determination is undefined."""


class ConvergenceError(NumericalError):
    pass


class EliminationAborted(SingularMatrix):
    """A refit during backward elimination hit a singular system.

    ``trace`` holds the rounds completed before the failure.
    """

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace
