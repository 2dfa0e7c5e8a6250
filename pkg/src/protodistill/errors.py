"""Exception hierarchy shared across the package."""


class ProtoDistillError(Exception):
    """Base class for every error raised by this package."""


class InvalidGridError(ProtoDistillError, ValueError):
    pass


class InvalidPointError(ProtoDistillError, ValueError):
    pass


class SpectralRangeError(ProtoDistillError, ValueError):
    pass


class DegenerateNormalizationError(ProtoDistillError, ValueError):
    pass


class LayoutError(ProtoDistillError, ValueError):
    pass


class NumericError(ProtoDistillError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class ShapeError(ProtoDistillError, ValueError):
    pass


class ScheduleError(ProtoDistillError, ValueError):
    pass


class BankIncompatibilityError(ProtoDistillError, ValueError):
    pass


class EmptyInputError(ProtoDistillError, ValueError):
    pass


class LossUndefinedError(ProtoDistillError, ValueError):
    pass


class ConfigurationError(ProtoDistillError, ValueError):
    pass


class UndefinedCCCError(ProtoDistillError, ValueError):
    pass


class LabelError(ProtoDistillError, ValueError):
    pass


class MetricsUndefinedError(ProtoDistillError, ValueError):
    pass


class ProtocolError(ProtoDistillError, ValueError):
    pass


class FormatError(ProtoDistillError, ValueError):
    """Malformed or unsupported container / table contents."""


class IntegrityError(ProtoDistillError):
    """A file's SHA-256 digest does not match its recorded value."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class SpecError(ProtoDistillError, ValueError):
    """Invalid synthetic-data specification."""
