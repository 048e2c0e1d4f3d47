"""Engine configuration with published defaults.

The defaults reproduce the reference operating point: 512-wide features, two
message-passing layers, temperature 0.1, contrastive weight 10, top-5 view
selection.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field


# Predicates rendered with the positional prompt template.
POSITIONAL_PREDICATES = ("left", "right", "front", "behind")

# Depth agreement tolerance for visibility, metres.
DEFAULT_EPS_D = 0.05
# Crop rectangle padding, pixels.
DEFAULT_CROP_PAD = 8
# Clamps for degenerate extents / volumes in edge descriptors.
DEFAULT_EPS_L = 1e-6
DEFAULT_EPS_V = 1e-6


@dataclass(frozen=True)
class EngineConfig:
    """Hyperparameters shared across the pipeline."""

    dim: int = 512                # feature width D
    layers: int = 2               # message-passing layers T
    heads: int = 8                # attention heads; must divide dim
    tau: float = 0.1              # contrastive temperature
    alpha: float = 10.0           # contrastive loss weight
    top_k_views: int = 5          # views kept per instance
    eps_d: float = DEFAULT_EPS_D
    crop_pad: int = DEFAULT_CROP_PAD
    eps_l: float = DEFAULT_EPS_L
    eps_v: float = DEFAULT_EPS_V
    point_encoder_hidden: tuple[int, ...] = (64, 128)
    edge_head_hidden: int = 0     # 0 means "use dim"
    residual_attention: bool = False
    precision: str = "f32"        # storage precision between layers: f32 | f64
    positional_predicates: tuple[str, ...] = POSITIONAL_PREDICATES

    def __post_init__(self) -> None:
        if self.dim <= 0 or self.layers < 0 or self.heads <= 0:
            raise ValueError("dim and heads must be positive, layers non-negative")
        if self.dim % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide dim ({self.dim})")
        if not 0.0 < self.tau:
            raise ValueError("tau must be strictly positive")
        if self.top_k_views <= 0:
            raise ValueError("top_k_views must be positive")
        if self.precision not in ("f32", "f64"):
            raise ValueError("precision must be 'f32' or 'f64'")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def edge_hidden(self) -> int:
        return self.edge_head_hidden if self.edge_head_hidden > 0 else self.dim

    def replace(self, **kw) -> "EngineConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["point_encoder_hidden"] = list(self.point_encoder_hidden)
        d["positional_predicates"] = list(self.positional_predicates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        kw = dict(d)
        if "point_encoder_hidden" in kw:
            kw["point_encoder_hidden"] = tuple(kw["point_encoder_hidden"])
        if "positional_predicates" in kw:
            kw["positional_predicates"] = tuple(kw["positional_predicates"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(kw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**kw)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_file(cls, path) -> "EngineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_CONFIG = EngineConfig()
