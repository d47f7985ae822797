"""Exception hierarchy shared across the package."""


class CGZSLError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CGZSLError, ValueError):
    pass


class ContractError(CGZSLError, ValueError):
    """A documented precondition was violated by the caller."""


class NumericalError(CGZSLError, ArithmeticError):
    """A loss or parameter became NaN/Inf.

    ``name`` carries the offending quantity (e.g. ``"L_snl"``) so the CLI can
    report it.
    """

    def __init__(self, name: str, message: str | None = None):
        self.name = name
        super().__init__(message or f"non-finite value in {name}")


class FormatError(CGZSLError, ValueError):
    """A binary container or checkpoint could not be decoded."""


class ValidationError(CGZSLError, ValueError):
    """A dataset failed validation; ``field`` names the offending part."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ScheduleError(CGZSLError, ValueError):
    """The requested task split cannot be realised."""
