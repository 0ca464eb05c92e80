"""Exception types shared across the package."""


class ConvnormError(Exception):
    """Base class for all convnorm errors."""


class FilterFormatError(ConvnormError):
    """File is not a recognizable filter container (bad magic, bad JSON, ...)."""


class FilterIntegrityError(ConvnormError):
    """Container parsed but its contents are inconsistent (count/dim mismatch)."""


class DomainError(ConvnormError):
    """Numerical input outside the valid domain (non-finite values, bad sizes)."""


class GeometryError(ConvnormError):
    """Input size n does not satisfy n > max(h, w) for the given filter."""


class ShapeMismatchError(ConvnormError):
    """Operands have incompatible shapes."""


class SizeCapError(ConvnormError):
    """Explicit Jacobian would exceed the configured entry cap.

    Signals that the matrix-free or frequency-domain method should be used
    instead of the dense oracle.
    """


class NotConvergedError(ConvnormError):
    """A spectral estimate needed by a downstream computation did not converge.

    Carries the partial estimate (or report) on the ``partial`` attribute.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DivergenceError(ConvnormError):
    """Training loss became non-finite; carries the trace recorded so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
