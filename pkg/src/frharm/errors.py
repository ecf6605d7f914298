"""Exception hierarchy shared by all frharm modules."""


class FrharmError(Exception):
    """Base class for all frharm errors."""


class ParameterError(FrharmError):
    """Invalid or inconsistent parameters (n, s, a, grid sizes, ...)."""


class ParityError(FrharmError):
    """Polynomial does not have the required parity in y."""


class PreconditionError(FrharmError):
    """An operation precondition was not met."""


class SingularSystem(FrharmError):
    """An exact linear system that must be invertible failed to invert."""


class BallOutsideDomain(FrharmError):
    """A requested ball is not covered by the field's grid."""


class QuadratureFailure(FrharmError):
    """A quadrature did not pass its internal self-estimate."""


class DecayTooSlow(FrharmError):
    """Declared decay of thin data cannot bound the integral tail."""


class SmoothnessError(FrharmError):
    """Missing or insufficient smoothness declaration (C^2 bound)."""


class NoConvergence(FrharmError):
    """An iteration or extrapolation ladder failed to stabilize."""


class CalibrationInconsistent(FrharmError):
    """Kernel-constant calibration residual exceeded its tolerance."""


class CalibrationFailed(FrharmError):
    """Iterative gauge-profile calibration did not reach its target."""


class WindowTooSmall(FrharmError):
    """Radius window has too few admissible radii."""


class HypothesisFailed(FrharmError):
    """Iteration-lemma hypothesis violated; carries the witness pair."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ConfigError(FrharmError):
    """Malformed or unknown experiment configuration."""
