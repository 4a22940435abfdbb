"""Exception types shared across the package."""


class LesionEvalError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(LesionEvalError):
    """A file does not conform to its declared on-disk format."""


class UnsupportedError(LesionEvalError):
    """The file is recognised but uses a feature this package does not read."""


class IoError(LesionEvalError):
    """Reading or writing a file failed at the OS level."""


class ShapeError(LesionEvalError):
    """Two volumes that must share a grid (dims and spacing) do not."""


class StatsError(LesionEvalError):
    """A statistical routine received degenerate or insufficient input."""


class SpecError(LesionEvalError):
    """A phantom scenario specification is invalid."""
