"""In-process plain-array bindings for the weaksg engine."""

from .session import (
    BridgeInputError,
    BridgeLabels,
    BridgeSession,
    SceneArrays,
    VersionMismatch,
    __version__,
    bridge_eval,
    bridge_pseudolabel,
    load_scene_arrays,
    load_session,
)

__all__ = [
    "__version__",
    "BridgeInputError",
    "BridgeLabels",
    "BridgeSession",
    "SceneArrays",
    "VersionMismatch",
    "bridge_eval",
    "bridge_pseudolabel",
    "load_scene_arrays",
    "load_session",
]
