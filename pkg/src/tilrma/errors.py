"""Exception hierarchy shared across the package."""


class TilrmaError(Exception):
    """Base class for all package-specific errors."""


class SingularMatrixError(TilrmaError):
    """A matrix factorization hit a pivot too small to continue."""


class SignalTooShortError(TilrmaError):
    """Input signal is shorter than one analysis window."""


class DegenerateSourceError(TilrmaError):
    """A separated source collapsed to (numerically) zero power."""


class ZeroReferenceError(TilrmaError):
    """An evaluation reference signal is identically zero."""


class IllConditionedProjectionError(TilrmaError):
    """Projection normal equations are too ill-conditioned to solve."""


class UnsupportedFormatError(TilrmaError):
    """WAV file uses an encoding this reader does not handle."""


class CorruptHeaderError(TilrmaError):
    """WAV file header is malformed or truncated."""
