"""Exception types raised across the package."""


class MarketAlignError(Exception):
    """Base class for every error raised by marketalign."""


class UndefinedRuleRow(MarketAlignError):
    """A reachable (feature, transcript prefix) pair has no rule row."""


class DimensionMismatch(MarketAlignError, ValueError):
    pass


class EmptyActionSet(MarketAlignError, ValueError):
    pass


class InvalidInstance(MarketAlignError, ValueError):
    """A game instance, rule or strategy violates its invariants."""


class SearchSpaceTooLarge(MarketAlignError):
    def __init__(self, size, bound):
        super().__init__(f"search space of size {size} exceeds cap {bound}")
        self.size = size
        self.bound = bound


class ProfileSpaceTooLarge(SearchSpaceTooLarge):
    pass


class MessageSpaceTooSmall(MarketAlignError):
    pass


class NotApplicable(MarketAlignError):
    pass


class CoverageViolation(MarketAlignError):
    pass


class ParameterViolation(MarketAlignError, ValueError):
    pass


class NonFiniteInput(MarketAlignError, ValueError):
    pass


class InsufficientData(MarketAlignError):
    pass


class SchemaError(MarketAlignError):
    def __init__(self, row, reason):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class InconsistentOptions(MarketAlignError):
    def __init__(self, question):
        super().__init__(f"inconsistent option counts for question {question!r}")
        self.question = question
