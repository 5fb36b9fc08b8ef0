"""Exception hierarchy shared by all modules."""


class IGADualLumpError(Exception):
    """Base class for library errors."""


class CapabilityError(IGADualLumpError, ValueError):
    """Requested degree, derivative order or model feature is not supported."""


class DomainError(IGADualLumpError, ValueError):
    """Evaluation point lies outside the parametric domain."""


class ConfigurationError(IGADualLumpError, ValueError):
    """Inconsistent inputs, e.g. a quadrature rule that is too weak."""


class GeometryError(IGADualLumpError, ValueError):
    """Invalid geometry parameters or a nonpositive Jacobian determinant."""


class LumpingError(IGADualLumpError, ArithmeticError):
    """A row sum selected for lumping is zero or negative."""


class NumericalError(IGADualLumpError, ArithmeticError):
    """A linear-algebra kernel failed or produced unusable output."""


class StabilityError(NumericalError):
    """Explicit time integration blew up."""

    def __init__(self, message, dt=None):
        super().__init__(message)
        self.dt = dt


class PairingError(IGADualLumpError, ValueError):
    """A discrete mode cannot be matched to an analytical reference cluster."""
