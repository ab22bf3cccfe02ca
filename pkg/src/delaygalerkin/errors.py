"""Exception hierarchy shared by every module of the package."""


class DelayGalerkinError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(DelayGalerkinError, ValueError):
    """A model, kernel or discretization parameter violates its contract."""


class InvalidInputError(DelayGalerkinError, ValueError):
    """Array shapes or sample counts do not match the discretization."""


class DomainError(DelayGalerkinError, ValueError):
    """A point or delay argument lies outside its admissible interval."""


class InvalidStateError(DelayGalerkinError, RuntimeError):
    """A history segment does not cover the delay window that is requested."""


class NumericalBlowupError(DelayGalerkinError, FloatingPointError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(message or f"non-finite state encountered at t = {self.time:.6g}")


class DegenerateEquilibriumError(DelayGalerkinError, ValueError):
    """The birth-rate convolution vanishes somewhere, so no kernel can be synthesized."""
