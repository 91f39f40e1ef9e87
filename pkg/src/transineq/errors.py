"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConjugateRangeError(DomainError):
    """The conjugate of a tabulated function is not determined by its grid."""


class TruncationError(ValueError):
    """A Poisson truncation leaves more tail mass than allowed."""

    def __init__(self, msg, required_K=None):
        super().__init__(msg)
        self.required_K = required_K


class StateBudgetError(ValueError):
    """Exact enumeration would exceed the configured state budget."""


class LipschitzViolation(ValueError):
    """A test function is not 1-Lipschitz for the declared metric."""

    def __init__(self, msg, pair=None):
        super().__init__(msg)
        self.pair = pair


class InapplicableError(ValueError):
    """The hypotheses of a checked inequality do not hold (e.g. D >= 1)."""
