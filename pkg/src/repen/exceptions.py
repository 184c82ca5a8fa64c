"""Exception types raised by repen."""


class UndefinedModelError(ValueError):
    """A histogram estimator is not uniquely defined (some cell is empty)."""


class DegenerateConditioningError(ValueError):
    """A cell's mean weight was zero for every resampling draw."""


class EmptyModelSetError(ValueError):
    """No model survives the minimum cell-count threshold."""


class DegeneratePathError(ValueError):
    """The selected dimension never jumps along the regularization path."""
