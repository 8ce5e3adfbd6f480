"""Exception types shared across the package."""


class BonusPolicyError(Exception):
    """Base class for package errors."""


class ConfigError(BonusPolicyError, ValueError):
    """Invalid run or generator configuration."""


class DataError(BonusPolicyError, ValueError):
    """Input data violates a structural invariant (unknown program, bad CSV...)."""


class UndefinedMetric(BonusPolicyError):
    """A metric has no value for this input, e.g. SPD when one group has no
    applicants, or utility of a program that admitted nobody.

    Deliberately distinct from a value of 0 so that callers exclude the
    program from aggregates instead of averaging in a fake parity.
    """


class NotApplicable(BonusPolicyError):
    """A program cannot be optimized or filtered with the data at hand."""
