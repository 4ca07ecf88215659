"""Exception hierarchy.

Every error carries the process exit code the command line tool uses for it.
"""


class ImpDelayError(Exception):
    exit_code = 1


class ConfigurationError(ImpDelayError, ValueError):
    """Bad scenario, schema violation or incompatible numerical settings."""

    exit_code = 2


class EvaluationError(ImpDelayError, ArithmeticError):
    """A user expression produced a non-finite value or failed to evaluate."""

    exit_code = 3


class InfeasibilityError(ImpDelayError):
    """An endpoint pair lies outside the target set."""

    exit_code = 4


class DivergenceError(ImpDelayError):
    """A simulation blew up (non-finite state or growth bound exceeded)."""

    exit_code = 5


class UndefinedDirectionError(ImpDelayError, ValueError):
    """Radon-Nikodym direction queried where the measure has no mass."""

    exit_code = 3


class HypothesisWarning(UserWarning):
    """A sampled growth or Lipschitz probe suggests a standing assumption fails."""
