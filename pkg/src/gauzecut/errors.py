"""Exception hierarchy. Everything raised on purpose derives from GauzeError."""


class GauzeError(Exception):
    pass


class InvalidParamsError(GauzeError, ValueError):
    pass


class ConfigError(GauzeError, ValueError):
    pass


class CutVertexError(GauzeError):
    """Tensioning a vertex that has been cut."""


class PinnedVertexError(GauzeError):
    """Cutting a vertex held by a clip or the pinch."""


class DegenerateContourError(GauzeError, ValueError):
    pass


class OutOfBoundsError(GauzeError, ValueError):
    pass


class InvalidPermutationError(GauzeError, ValueError):
    pass


class EmptyRegionError(GauzeError, ValueError):
    pass


class ZeroBaselineError(GauzeError, ZeroDivisionError):
    pass


class EpisodeError(GauzeError):
    pass


class PinchOnTrajectoryError(EpisodeError, ValueError):
    pass


class InsufficientFiducialsError(EpisodeError, ValueError):
    pass


class EpisodeFinishedError(EpisodeError):
    pass


class DimensionMismatchError(GauzeError, ValueError):
    pass


class NonFiniteGradientError(GauzeError, FloatingPointError):
    pass


class PolicyFileError(GauzeError):
    pass


class CorruptPolicyFileError(PolicyFileError, ValueError):
    pass


class ArchitectureMismatchError(PolicyFileError, ValueError):
    pass


class EmptyCandidateSetError(GauzeError):
    pass


class TooManySegmentsError(GauzeError, ValueError):
    pass


class BudgetExceededError(GauzeError):
    pass


class ShapeParseError(GauzeError, ValueError):
    pass
