"""Exception hierarchy shared by all exf modules."""


class ExfError(Exception):
    """Base class for every error raised by exf."""


class InvalidInputError(ExfError, ValueError):
    """Malformed array shapes, non-finite entries, or out-of-range values."""


class InvalidParameterError(ExfError, ValueError):
    """A hyperparameter outside its admissible range."""


class DegenerateError(ExfError, ValueError):
    """Geometry that leaves a quantity undefined (zero rows, coincident batches)."""


class BatchTooSmallError(ExfError, ValueError):
    pass


class ConfigError(ExfError, ValueError):
    pass


class ParseError(ExfError, ValueError):
    pass


class DivergenceError(ExfError, RuntimeError):
    """Training produced a non-finite loss."""
