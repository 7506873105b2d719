"""Exception hierarchy. Each class carries the process exit code the CLI uses."""


class TwoPathogenError(Exception):
    exit_code = 1


class ParseError(TwoPathogenError):
    exit_code = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(TwoPathogenError):
    exit_code = 4

    def __init__(self, message, column=None):
        self.column = column
        if column is not None:
            message = f"column {column!r}: {message}"
        super().__init__(message)


class InsufficientHistory(TwoPathogenError):
    exit_code = 5


class NoOnsetFound(TwoPathogenError):
    exit_code = 6


class NoOffsetFound(TwoPathogenError):
    exit_code = 7


class IntegrationError(TwoPathogenError):
    exit_code = 8


class StepFailure(IntegrationError):
    exit_code = 8


class NonFiniteState(IntegrationError):
    exit_code = 9


class InfeasibleInitial(TwoPathogenError):
    exit_code = 10


class InitInfeasible(TwoPathogenError):
    exit_code = 11


class MarginalCase(TwoPathogenError):
    exit_code = 12


class ConfigError(TwoPathogenError):
    exit_code = 13


class GapInSeason(TwoPathogenError):
    exit_code = 14


class NonConvergenceWarning(UserWarning):
    pass


EXIT_CODES = {cls.__name__: cls.exit_code for cls in (
    ParseError, SchemaError, InsufficientHistory, NoOnsetFound, NoOffsetFound,
    StepFailure, NonFiniteState, InfeasibleInitial, InitInfeasible,
    MarginalCase, ConfigError, GapInSeason)}
