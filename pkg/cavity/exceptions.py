"""Error categories shared by every selftrap module.

Each category has a machine-readable name and the process exit code the
CLI reports for it.
"""

import enum


class Outcome(enum.Enum):
    """Sentinel results that are physical states rather than failures."""

    UNTRAPPED = "untrapped"
    NO_DECAY = "no-decay"


UNTRAPPED = Outcome.UNTRAPPED
NO_DECAY = Outcome.NO_DECAY


class SelfTrapError(Exception):
    category = "error"
    exit_code = 1


class InvalidParameters(SelfTrapError, ValueError):
    category = "invalid-parameters"
    exit_code = 3


class ConfigError(SelfTrapError):
    category = "config-error"
    exit_code = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateData(SelfTrapError, ValueError):
    category = "degenerate-data"
    exit_code = 4


class SchemaMismatch(SelfTrapError, ValueError):
    category = "schema-mismatch"
    exit_code = 4


class NumericalInstability(SelfTrapError, ArithmeticError):
    category = "numerical-instability"
    exit_code = 5


class NonFiniteObjective(NumericalInstability):
    category = "non-finite-objective"


class DigestMismatch(SelfTrapError):
    category = "digest-mismatch"
    exit_code = 4
