"""Exception types raised across the toolkit."""


class BreathAuthError(Exception):
    """Base class for all toolkit errors."""


# audio / file formats
class MalformedHeader(BreathAuthError, ValueError):
    pass


class UnsupportedEncoding(BreathAuthError, ValueError):
    pass


class TruncatedData(BreathAuthError, ValueError):
    pass


class IoFailure(BreathAuthError, OSError):
    pass


class VersionUnsupported(BreathAuthError, ValueError):
    pass


class ChecksumMismatch(BreathAuthError, ValueError):
    pass


# signal / features
class DurationTooShort(BreathAuthError, ValueError):
    pass


class ClipTooShort(BreathAuthError, ValueError):
    pass


class InsufficientSamples(BreathAuthError, ValueError):
    pass


# models
class ShapeMismatch(BreathAuthError, ValueError):
    pass


class NonFiniteLoss(BreathAuthError, ArithmeticError):
    pass


class NonFiniteInput(BreathAuthError, ValueError):
    pass


class SingleClassInput(BreathAuthError, ValueError):
    pass


# selection
class EmptySeries(BreathAuthError, ValueError):
    pass


class SeriesTooShort(BreathAuthError, ValueError):
    pass


# bench / cli
class InvalidRepetitionCount(BreathAuthError, ValueError):
    pass


class UsageError(BreathAuthError):
    pass
