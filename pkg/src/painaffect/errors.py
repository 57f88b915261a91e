"""Exception types shared across the package."""


class PainAffectError(Exception):
    """Base class for all package errors."""


class ParameterError(PainAffectError, ValueError):
    """Invalid operation parameters (window sizes, fractions, hyperparameters)."""


class DataError(PainAffectError, ValueError):
    """Input data violates an operation's structural requirements."""


class CorpusError(PainAffectError):
    """A corpus on disk could not be loaded; names the offending file and line."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}" + (f":{line}" if line is not None else "") + ": "
        super().__init__(where + message)


class ProtocolError(PainAffectError):
    """An experiment protocol cannot be carried out on the given data."""
