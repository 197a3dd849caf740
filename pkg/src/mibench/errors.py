"""Exception types shared across the package."""


class MibenchError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(MibenchError, ValueError):
    """Invalid static configuration (layer dims, grid files, CLI flags)."""


class DomainError(MibenchError, ValueError):
    """Numeric argument outside its mathematical domain."""


class ShapeError(MibenchError, ValueError):
    """Array argument with incompatible shape."""


class CacheMismatchError(MibenchError, RuntimeError):
    """Backward pass invoked with a cache from a different forward pass."""


class TrainingDivergenceError(MibenchError, RuntimeError):
    """Non-finite gradients or parameters during optimization.

    Carries the 1-based optimizer step at which the divergence was seen.
    """

    def __init__(self, message, step_index):
        super().__init__(f"{message} (step {step_index})")
        self.step_index = step_index


class EstimateUnstableError(MibenchError, RuntimeError):
    """An estimator produced a non-finite value from degenerate scores."""

    def __init__(self, message, max_abs_score):
        super().__init__(f"{message} (max |score| = {max_abs_score:g})")
        self.max_abs_score = max_abs_score


class IdxFormatError(MibenchError, ValueError):
    """Malformed IDX image file. ``offset`` is the failing byte position."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
