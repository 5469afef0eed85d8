"""Semantic exception hierarchy.

Public functions never raise bare ValueError/RuntimeError; the CLI maps
these classes onto exit codes (validation-type errors -> 1, resource and
instability errors -> 2).
"""


class RdelabError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(RdelabError, ValueError):
    """A numeric argument lies outside its mathematical domain."""


class ArgumentError(RdelabError, ValueError):
    """An argument has the wrong shape or structure (counts, emptiness)."""


class ValidationError(RdelabError, ValueError):
    """Input data or configuration violates a declared contract."""


class DegenerateParameterError(DomainError):
    """A parameter value makes the requested computation degenerate."""


class ResourceBudgetError(RdelabError, RuntimeError):
    """A requested computation exceeds the configured resource budget."""


class NumericalInstabilityError(RdelabError, ArithmeticError):
    """An iteration left the region where the computation is meaningful."""
