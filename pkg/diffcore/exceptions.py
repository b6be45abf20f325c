"""
Exception hierarchy shared by every app in the project.
"""


class KnnError(Exception):
    """Base class for errors raised by the kNN model library."""


class DimensionError(KnnError, ValueError):
    """Operand shapes do not agree."""


class ParameterError(KnnError, ValueError):
    """A hyperparameter or operation argument is outside its valid range."""


class DistributionError(KnnError, ValueError):
    """An input that must be a probability distribution is not one."""


class BatchSizeError(KnnError, ValueError):
    """A batch is too small for the requested operation."""


class FormatError(KnnError, ValueError):
    """A data, targets or checkpoint file does not follow its format."""
