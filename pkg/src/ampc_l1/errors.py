"""Exception hierarchy shared by every module in the package."""


class AmpcL1Error(Exception):
    """Base class for all package errors."""


class NonDiagonalizable(AmpcL1Error):
    """Eigenvector matrix is numerically singular (defective input)."""


class ImaginaryResidualTooLarge(AmpcL1Error):
    """Complex leakage in a real matrix function exceeded tolerance."""


class Singular(AmpcL1Error):
    """Matrix inverse requested for a numerically singular matrix."""


class OutOfSchedule(AmpcL1Error):
    """Time requested outside the plant schedule coverage."""


class RankDeficient(AmpcL1Error):
    """Input matrix does not have full column rank."""


class ZeroDcGain(AmpcL1Error):
    """Matched transmission has zero DC gain, so it cannot be inverted."""


class NotHurwitz(AmpcL1Error):
    """A matrix required to be Hurwitz has an eigenvalue with Re >= 0."""


class NotPositiveDefinite(AmpcL1Error):
    """QP Hessian is not symmetric positive definite."""


class MaxIterations(AmpcL1Error):
    """Iterative solver did not converge within its iteration budget."""


class UnknownPreset(AmpcL1Error):
    """Named scenario preset does not exist."""


class UnstableAtZeroDelay(AmpcL1Error):
    """Closed loop is already unstable before any delay is injected."""

    def __init__(self, message: str, margin: float = 0.0):
        super().__init__(message)
        self.margin = margin


class ConfigError(AmpcL1Error):
    """Configuration file is missing, unreadable, or invalid."""


class ConfigMismatch(ConfigError):
    """Individually valid settings that cannot be used together."""
