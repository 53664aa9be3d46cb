"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class EvolopError(Exception):
    exit_code = 1


class ConfigError(EvolopError, ValueError):
    """Invalid parameters, shapes or configuration files."""

    exit_code = 2


class SimulationError(EvolopError, RuntimeError):
    """A trajectory diverged or left the admissible state space."""

    exit_code = 3

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NumericalError(EvolopError, ArithmeticError):
    """A linear-algebra step failed (singular system, failed factorization)."""

    exit_code = 4


class SingularSystemError(NumericalError):
    pass


class CorruptArtifactError(EvolopError):
    """A saved file failed its checksum or could not be parsed."""

    exit_code = 5


class NonConvergedError(EvolopError):
    """A ground-truth oracle did not pass its self-convergence check."""

    exit_code = 6
