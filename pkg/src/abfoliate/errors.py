"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class FinslerError(Exception):
    """Base class for all package errors."""


class DomainError(FinslerError, ValueError):
    """An argument lies outside the admissible domain of the profile function."""


class NotUnitVector(FinslerError, ValueError):
    pass


class NotTangential(FinslerError, ValueError):
    pass


class FormMismatch(FinslerError, ArithmeticError):
    """Two closed forms of the same quantity disagree."""


class NoRoot(FinslerError, ArithmeticError):
    pass


class NoConvergence(FinslerError, ArithmeticError):
    pass


class SingularMetric(FinslerError, ArithmeticError):
    pass


class ConditionViolated(FinslerError, ValueError):
    """An admissibility condition failed.

    ``margin_name`` names the failing condition, ``margin`` carries its value and
    ``node`` (when raised from a grid computation) the multi-index of the worst node.
    """

    def __init__(self, message: str, margin_name: str = "", margin: float = float("nan"),
                 node: tuple | None = None):
        super().__init__(message)
        self.margin_name = margin_name
        self.margin = margin
        self.node = node


class NotConstantCase(FinslerError, ValueError):
    pass


class WrongFamily(FinslerError, ValueError):
    pass


class PreconditionFailed(FinslerError, ValueError):
    pass


class ConfigError(FinslerError, ValueError):
    pass
