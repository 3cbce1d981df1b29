"""Exception hierarchy. Each family maps to one CLI exit code."""


class ShadowRatingError(Exception):
    exit_code = 1


class ConfigError(ShadowRatingError, ValueError):
    """Invalid configuration, infeasible synthetic spec, bad CLI input."""

    exit_code = 2


class DataError(ShadowRatingError, ValueError):
    """Input data that violates its schema or cannot be processed."""

    exit_code = 3


class SchemaError(DataError):
    pass


class FitError(DataError):
    pass


class NumericError(ShadowRatingError, ArithmeticError):
    """Non-finite values where finite ones are required."""

    exit_code = 4


class StateError(ShadowRatingError, RuntimeError):
    exit_code = 4
