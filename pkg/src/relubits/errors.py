"""Exception hierarchy shared by every module.

All errors subclass ``ValueError`` (or ``IndexError``) so callers that only
care about "bad input" can catch the builtin.
"""


class RelubitsError(Exception):
    """Base class; ``exit_code`` is what the command line reports."""

    exit_code = 1


class ShapeError(RelubitsError, ValueError):
    exit_code = 4


class DomainError(RelubitsError, ValueError):
    exit_code = 2


class LabelError(RelubitsError, IndexError):
    exit_code = 2


class ParseError(RelubitsError, ValueError):
    """Malformed file. ``offset`` is the byte position where parsing failed."""

    exit_code = 4

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class EmptyDiscriminatorError(RelubitsError, ValueError):
    """No classifier bits survive the thresholds."""

    exit_code = 5


class BudgetError(RelubitsError, RuntimeError):
    exit_code = 1

    def __init__(self, message, interval=None):
        self.interval = interval
        super().__init__(message)


class BadMagicError(ParseError):
    pass


class TruncatedError(ParseError):
    pass


class CountMismatchError(ParseError):
    pass
