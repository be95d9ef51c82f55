"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: :class:`ImageIOError` is an I/O failure
(exit 2), everything else deriving from :class:`HdrToolkitError` is a
validation or degenerate-input failure (exit 3).
"""


class HdrToolkitError(Exception):
    """Base class for all toolkit errors."""


class ImageFormatError(HdrToolkitError, ValueError):
    """Malformed PPM/PFM header or payload."""


class UnsupportedFormatError(ImageFormatError):
    """Well-formed file using a variant this toolkit does not handle."""


class TruncatedDataError(ImageFormatError):
    """Payload shorter than the header promises."""


class ValidationError(HdrToolkitError, ValueError):
    """A value violates a type invariant (non-finite, negative, out of range)."""


class ShapeError(HdrToolkitError, ValueError):
    """Array or image shapes are incompatible."""


class PairingError(ShapeError):
    """Ground-truth and reconstruction images cannot be paired."""


class PreconditionError(HdrToolkitError, ValueError):
    """Input is valid in itself but not acceptable to the operation."""


class DegenerateInputError(HdrToolkitError, ValueError):
    """Input is valid but degenerate (all zero, zero distance, ...)."""


class NumericError(HdrToolkitError, ArithmeticError):
    """A computation produced a non-finite or out-of-domain value."""


class EmptyDatasetError(HdrToolkitError):
    """No ground-truth/reconstruction pairs could be matched."""


class ImageIOError(HdrToolkitError, OSError):
    """Reading or writing a file failed."""
