"""Exception hierarchy shared by every afnet module."""


class AFNetError(Exception):
    """Base class for all afnet errors."""


class DimensionError(AFNetError, ValueError):
    """Tensor shapes or channel counts do not match an operation's contract."""


class ParameterError(AFNetError, ValueError):
    """A configuration value or argument is outside its allowed range."""


class NumericError(AFNetError, ArithmeticError):
    """A NaN/Inf was found, or a loss diverged."""


class FormatError(AFNetError, ValueError):
    """A file could not be decoded (bad bit depth, missing sidecar, corrupt checkpoint)."""


class DataError(AFNetError):
    """A dataset violates its layout (missing pairs, empty splits)."""
