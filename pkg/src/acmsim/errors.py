"""Exception types raised across the package."""


class AcmsimError(Exception):
    """Base class for all package errors."""


class GimbalLock(AcmsimError):
    """Pitch angle too close to +-pi/2 for the ZYX Euler-rate map."""


class ArcLengthOutOfRange(AcmsimError):
    """Arc-length coordinate outside [0, L]."""


class SingularMass(AcmsimError):
    """Generalized mass matrix is numerically singular."""


class NonFiniteState(AcmsimError):
    """Integration produced NaN or infinity."""


class BehindCamera(AcmsimError):
    """Point at or behind the camera near plane."""


class DegenerateProjection(AcmsimError):
    """Compensated projection lost its positive third component."""


class DegenerateQuad(AcmsimError):
    """Feature quadrilateral has repeated corners."""


class SingularInteraction(AcmsimError):
    """Interaction matrix condition number above threshold."""


class NoFeasibleConfig(AcmsimError):
    """Recovery search found no rod configuration with the target in front."""


class DegenerateWindow(AcmsimError):
    """Trajectory time window is empty or reversed."""


class TargetLost(AcmsimError):
    """Target invisible to both cameras."""


class DegenerateThrust(AcmsimError):
    """Total force too small to define attitude references."""


class InfeasibleAllocation(AcmsimError):
    """Actuator allocation left a residual on the actuated channels."""


class PerturbationBreaksPD(AcmsimError):
    """Perturbed inertia matrix is no longer positive definite."""


class ReferenceNotVisible(AcmsimError):
    """Reference snapshot pose does not see all four target corners."""


class ConfigError(AcmsimError):
    """Base class for configuration file problems."""


class ParseError(ConfigError):
    """Config file is not syntactically valid."""


class ValidationError(ConfigError):
    """Config file parsed but a field is missing, unknown, or invalid."""
