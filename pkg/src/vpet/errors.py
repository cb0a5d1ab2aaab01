"""Exception hierarchy.

``DataError`` subclasses map to CLI exit code 2; anything raised by click
(bad flags, missing arguments) maps to exit code 1.
"""


class VpetError(Exception):
    """Base class for all toolkit errors."""


class DataError(VpetError):
    """Invalid data: bad files, shape mismatches, impossible requests."""


class EmptyDatasetError(DataError):
    pass


class InsufficientShotsError(DataError):
    def __init__(self, class_index: int, available: int, requested: int):
        self.class_index = class_index
        super().__init__(
            f"insufficient shots: class {class_index} has {available} samples, "
            f"need {requested}"
        )


class ShapeError(DataError):
    pass


class DecodeError(DataError):
    """Base for embedding-file decode failures."""


class BadMagicError(DecodeError):
    pass


class UnsupportedVersionError(DecodeError):
    pass


class TruncatedFileError(DecodeError):
    pass


class NonFiniteValueError(DecodeError):
    pass


class LabelRangeError(DecodeError):
    pass


class HiddenLabelError(VpetError):
    """Raised when withheld labels are read outside a diagnostic context."""


class DivergenceError(VpetError):
    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"divergence: non-finite loss at iteration {iteration}")


class MisalignedSourcesError(DataError):
    pass


class TooFewPointsError(DataError):
    pass
