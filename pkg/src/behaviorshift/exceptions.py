"""Exception hierarchy shared by every pipeline stage."""


class BehaviorShiftError(Exception):
    """Base class for all errors raised by this package."""


class HomeUnresolvable(BehaviorShiftError):
    """No night-time location fixes were available to place the home."""


class DateMismatch(BehaviorShiftError, ValueError):
    pass


class DuplicateDay(BehaviorShiftError, ValueError):
    pass


class BadValue(BehaviorShiftError, ValueError):
    pass


class MissingDay(BehaviorShiftError, ValueError):
    """An operation that needs data was handed a fully missing day."""


class EmptySeries(BehaviorShiftError, ValueError):
    """Every day of the series is fully missing."""


class InsufficientData(BehaviorShiftError, ValueError):
    """Fewer observed days than mixture components."""


class NumericalCollapse(BehaviorShiftError, FloatingPointError):
    pass


class UndefinedROC(BehaviorShiftError, ValueError):
    """ROC needs at least one positive and one negative label."""


class ConfigError(BehaviorShiftError, ValueError):
    pass
