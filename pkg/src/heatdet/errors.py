"""Exception hierarchy shared by all heatdet modules."""


class HeatdetError(Exception):
    """Base class for every error raised by the package."""


class InputError(HeatdetError, ValueError):
    """Invalid or inconsistent user input."""


class DomainError(HeatdetError, ValueError):
    """A point or pair lies outside the domain where a quantity is defined."""


class EmptyBasisError(InputError):
    """The requested cutoff leaves no eigenmodes."""


class TruncationError(HeatdetError):
    """The spectral truncation tail exceeds the requested tolerance.

    ``t_min_valid`` is the smallest time for which the tail bound of the
    offending basis satisfies the tolerance.
    """

    def __init__(self, message, t_min_valid=None, bound=None):
        super().__init__(message)
        self.t_min_valid = t_min_valid
        self.bound = bound


class FitError(HeatdetError):
    """Least-squares fit could not be performed (e.g. rank deficiency)."""


class ConfigError(HeatdetError):
    """Malformed run configuration or an empty admissible window."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{loc}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column
