"""Exception hierarchy shared by every module."""


class AlphaForgeError(Exception):
    """Base class for all package errors."""


# panel store
class PanelError(AlphaForgeError):
    pass


class DuplicateRecord(PanelError):
    pass


class MalformedRow(PanelError):
    pass


class EmptyInput(PanelError):
    pass


class InvalidConfig(AlphaForgeError):
    pass


class UnknownField(PanelError, KeyError):
    pass


# data quality
class NoData(AlphaForgeError):
    pass


class ZeroExpected(AlphaForgeError):
    pass


# expression language
class ExprError(AlphaForgeError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UnknownOperator(ExprError):
    pass


class ArityError(ExprError):
    pass


class WindowOutOfRange(ExprError):
    pass


class NoLegalMove(ExprError):
    pass


# backtest
class MissingReturns(AlphaForgeError):
    pass


class TooFewDates(AlphaForgeError):
    pass


# ensemble
class EmptyDataset(AlphaForgeError):
    pass


class SingularFit(AlphaForgeError):
    pass


class NotFitted(AlphaForgeError):
    pass


class WeightMismatch(AlphaForgeError):
    pass


class ArchiveTooSmall(AlphaForgeError):
    pass


# allocation
class CalendarMismatch(AlphaForgeError):
    pass


class ShapeMismatch(AlphaForgeError):
    pass


class InfeasibleCardinality(AlphaForgeError):
    pass


class ZeroVolatilityAsset(AlphaForgeError):
    pass


class NoConvergence(AlphaForgeError):
    pass
