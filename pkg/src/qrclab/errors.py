"""Exception hierarchy shared by every qrclab module."""


class QrcError(Exception):
    """Base class for all library errors."""


class InvalidArgument(QrcError, ValueError):
    """An argument violates an operation's precondition."""


class SizeError(InvalidArgument):
    """A requested operator would exceed the configured maximum dimension."""


class NumericalError(QrcError, ArithmeticError):
    """A linear-algebra step could not be carried out reliably."""


class InvariantError(QrcError, AssertionError):
    """A produced object failed one of its structural invariants.

    ``invariant`` names the violated property so callers (the CLI in
    particular) can report it.
    """

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)
