"""Exception hierarchy shared by every pipeline stage."""


class SamsonError(Exception):
    """Base class for all pipeline errors."""


class DataError(SamsonError):
    """Input data violates a contract (shape, finiteness, labels)."""


class MalformedFile(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonFiniteData(DataError):
    pass


class UnknownBand(DataError):
    pass


class MissingCalibration(DataError):
    pass


class EmptyHistogram(DataError):
    pass


class PlacementFailure(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class InvalidLabel(DataError):
    pass


class InvalidClass(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class EmptyDataset(DataError):
    pass


class TooFewSamples(DataError):
    pass


class UninitializedStats(SamsonError):
    """Eval-mode inference requested before any batch statistics exist."""


class StateError(SamsonError):
    """Operation called out of order (e.g. backward without forward)."""


class DivergenceDetected(SamsonError):
    """Training produced a non-finite loss."""


class IoFailure(SamsonError):
    pass


class ConfigError(SamsonError):
    pass
