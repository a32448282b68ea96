class DimensionError(ValueError):
    """Raised when array shapes do not match the space they are used in."""


class FilterDegeneracyError(RuntimeError):
    """Every weight vanished: the model and the data are incompatible."""
