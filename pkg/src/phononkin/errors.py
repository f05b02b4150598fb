"""Exception and warning types shared across the package."""


class PhononKinError(Exception):
    """Base class for all errors raised by phononkin."""

    #: exit code used by the command line front end
    exit_code = 2


class ConfigError(PhononKinError, ValueError):
    """Invalid or inconsistent run parameters."""

    exit_code = 1


class ModelError(PhononKinError, ValueError):
    """A coupling stencil or dispersion relation violates its invariants."""

    exit_code = 1


class BlowUp(PhononKinError, FloatingPointError):
    """The microscopic dynamics left the admissible amplitude range."""

    def __init__(self, message, t=None, max_amplitude=None):
        super().__init__(message)
        self.t = t
        self.max_amplitude = max_amplitude


class ResolutionError(PhononKinError):
    """Mollifier width too small for the momentum grid."""


class StepError(PhononKinError):
    """Adaptive time stepping failed to reach the requested accuracy."""


class ResourceGuard(PhononKinError):
    """A computation would exceed the configured size limits."""


class InconsistentSystem(PhononKinError, AssertionError):
    """Kirchhoff constraints of a diagram have no solution."""


class NegativityWarning(RuntimeWarning):
    """A Wigner table developed negative entries beyond tolerance."""
