"""Exception hierarchy shared by the pipeline and mapped to CLI exit codes."""


class DldError(Exception):
    exit_code = 1


class ConfigurationError(DldError, ValueError):
    exit_code = 2


class SolverError(DldError):
    """Flow solve failed to converge; carries the last residual."""

    exit_code = 3

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class OutOfDomainError(DldError, ValueError):
    exit_code = 3


class IntegrationFault(DldError):
    exit_code = 3


class DataError(DldError, ValueError):
    exit_code = 4


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StratificationError(DataError):
    pass


class ModelError(DldError, ValueError):
    exit_code = 5
