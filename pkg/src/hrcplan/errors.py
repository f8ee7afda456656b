"""Exception types shared across the package."""


class HrcPlanError(Exception):
    """Base class for all package errors."""


class JointLimitViolation(HrcPlanError):
    """A joint angle falls outside the robot's limits."""


class NonUnitBone(HrcPlanError):
    """A bone direction vector deviates from unit norm beyond tolerance."""


class DegenerateBone(HrcPlanError):
    """A bone segment is too short to define a direction."""


class DomainError(HrcPlanError):
    """A scalar argument lies outside its mathematical domain."""


class UnreachableWaypoint(HrcPlanError):
    """A wrist target exceeds the arm's reach from the shoulder."""


class InsufficientLength(HrcPlanError):
    """A trajectory is too short to cut observation/prediction windows."""


class ShapeMismatch(HrcPlanError):
    """Array dimensions do not chain with the network or graph layout."""


class DivergenceError(HrcPlanError):
    """Training loss became non-finite."""


class InsufficientSamples(HrcPlanError):
    """Too few Monte Carlo samples to estimate a variance."""


class SchemaMismatch(HrcPlanError):
    """Prediction dimensions disagree with the graph schema."""


class ConfigError(HrcPlanError):
    """An experiment configuration file is invalid or incomplete."""
