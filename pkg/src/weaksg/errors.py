"""Engine error types.

Every contract violation raises a named subclass of EngineError so callers
(CLI, service, bridge) can map failures to stable error codes.
"""


class EngineError(Exception):
    """Base class for all engine-level failures."""


class BadScene(EngineError):
    """Scene bundle violates a structural precondition."""


class EmptySupervision(EngineError):
    """Triplet set has no entries."""


class BadCamera(EngineError):
    """Camera view has singular intrinsics or a malformed extrinsic matrix."""


class NoVisibleView(EngineError):
    """No view sees any point of the instance."""


class EmptyInstance(EngineError):
    """Instance has an empty point set."""


class BadWeights(EngineError):
    """Weight bundle is missing records, has surplus records, or shapes mismatch."""


class MissingEmbedding(EngineError):
    """A required token is absent from an embedding table."""


class ZeroEmbedding(EngineError):
    """A vector with zero norm reached a cosine computation."""


class BadTemperature(EngineError):
    """Contrastive temperature must be strictly positive."""


class EmptyBatch(EngineError):
    """Every row of a loss batch was ignored."""


class EmptyEval(EngineError):
    """Metric requested over empty ground truth."""


class PlacementFailed(EngineError):
    """Synthetic box placement exhausted its retry budget."""


class BadFormat(EngineError):
    """A serialized artifact is malformed or fails a header check."""
