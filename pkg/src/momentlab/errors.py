"""Exception hierarchy shared across the package."""


class MomentLabError(Exception):
    """Base class for all package-specific errors."""


class UnknownAxis(MomentLabError):
    pass


class ZeroMassEvent(MomentLabError):
    pass


class PathLeavesSimplex(MomentLabError):
    pass


class EmptyDataset(MomentLabError):
    pass


class LabelMismatch(MomentLabError):
    pass


class EmptyTarget(MomentLabError):
    pass


class DegenerateWeight(MomentLabError):
    pass


class NotSymmetric(MomentLabError):
    pass


class NegativeEigenvalue(MomentLabError):
    pass


class InfeasiblePoint(MomentLabError):
    pass


class OverlapViolation(MomentLabError):
    pass


class BridgeViolated(MomentLabError):
    pass


class MissingOverlap(MomentLabError):
    pass


class InvalidSizes(MomentLabError):
    pass


class NotBijective(MomentLabError):
    pass


class DegenerateVariance(MomentLabError):
    pass


class EmptyArm(MomentLabError):
    pass


class BridgeUnsolvable(MomentLabError):
    pass


class GridTooCoarse(MomentLabError):
    pass


class EstimandMismatch(MomentLabError):
    pass


class ConfigInvalid(MomentLabError):
    pass


class PerturbationLeavesSimplex(MomentLabError):
    pass
