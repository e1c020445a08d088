"""Exception hierarchy shared by all modules.

Every error raised on a contract violation derives from BenchError so CLI
code can map validation failures to exit code 1 and everything else to 2.
"""


class BenchError(Exception):
    """Base class for all workbench errors."""


class ValidationError(BenchError):
    """Input violates a documented precondition (bad values, non-finite data)."""


class FormatError(BenchError):
    """On-disk bytes do not match the expected container format."""


class LengthError(FormatError):
    """Payload shorter or longer than the header declares."""


class DimensionError(BenchError):
    """Array shapes incompatible with the requested operation."""


class LabelError(BenchError):
    """Label values outside the declared range (e.g. non-binary mask)."""


class SizeError(BenchError):
    """Too few samples/points/records for the operation."""


class MixedSeriesError(BenchError):
    """DICOM directory mixes files from more than one series."""


class DuplicateSliceError(BenchError):
    """Two DICOM slices share the same spatial position."""


class EmptyGroundTruthError(BenchError):
    """Ground truth contains no foreground where some is required."""


class EmptySelectionError(BenchError):
    """A filter step left no eligible items."""


class InsufficiencyError(BenchError):
    """Pool too small for the requested sample."""


class CoverageError(BenchError):
    """A class label is missing from the training set."""


class DivergenceError(BenchError):
    """Training produced a non-finite loss."""


class NumericDomainError(BenchError):
    """Matrix outside the numeric domain of the operation (asymmetric, indefinite)."""
