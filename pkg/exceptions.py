class TriboostError(Exception):
    """Base class for errors raised by triboost."""


class ConfigError(TriboostError, ValueError):
    """Invalid configuration (loss spec, tree/fit config, tuning grid)."""


class DomainError(TriboostError, ValueError):
    """A response or simulator input lies outside the valid domain."""


class InputError(TriboostError, ValueError):
    """Malformed input data: empty arrays, width mismatch, non-finite scores, bad CSV."""


class NumericalError(TriboostError, ArithmeticError):
    """The fit produced non-finite values or every grid cell diverged."""
