"""Pinhole projection of instance points, depth visibility, and view ranking.

The projection is the homogeneous map (1/Z) [U, V, 1]^T = Int . Ext . [X, 1]^T
with Z taken from the third component before the perspective divide. Depth
lookups are nearest-pixel; interpolation across depth discontinuities is
unsound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CROP_PAD, DEFAULT_EPS_D
from .errors import BadCamera, NoVisibleView
from .scene_model import CameraView


@dataclass(frozen=True)
class PixelProjection:
    u: float
    v: float
    z: float
    point_index: int
    valid: bool


@dataclass(frozen=True)
class ViewPick:
    """One selected view: score is the depth-visible point fraction."""

    view_id: int
    image_id: str
    score: float
    crop_rect: tuple[int, int, int, int]  # x0, y0, x1, y1; half-open, pixels


@dataclass(frozen=True)
class ViewSelection:
    instance_index: int
    picks: tuple[ViewPick, ...]

    def __post_init__(self):
        scores = [p.score for p in self.picks]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("view scores must be non-increasing")


def _camera_rows(view: CameraView) -> np.ndarray:
    """Int . Ext collapsed to a single 3x4 projection matrix."""
    if abs(np.linalg.det(view.intrinsics)) < 1e-12:
        raise BadCamera(f"singular intrinsics for view {view.image_id}")
    return view.intrinsics @ view.extrinsics[:3, :]


def project_points(points: np.ndarray, view: CameraView) -> list[PixelProjection]:
    """Project world points into the view; valid=False marks z <= 0 or out of bounds."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be Nx3, got {pts.shape}")
    proj = _camera_rows(view)
    homo = np.concatenate([pts, np.ones((pts.shape[0], 1))], axis=1)
    p = homo @ proj.T  # N x 3
    z = p[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(z != 0.0, p[:, 0] / z, np.inf)
        v = np.where(z != 0.0, p[:, 1] / z, np.inf)
    valid = (z > 0) & (u >= 0) & (u < view.width) & (v >= 0) & (v < view.height)
    return [
        PixelProjection(float(u[i]), float(v[i]), float(z[i]), i, bool(valid[i]))
        for i in range(pts.shape[0])
    ]


def depth_visible(proj: PixelProjection, depth_map: np.ndarray, eps_d: float = DEFAULT_EPS_D) -> bool:
    """True iff the stored depth is valid and agrees with proj.z within eps_d."""
    if not proj.valid:
        raise ValueError("depth_visible requires a valid projection")
    h, w = depth_map.shape
    # round() can land on the exclusive edge for coordinates just below it
    r = min(int(round(proj.v)), h - 1)
    c = min(int(round(proj.u)), w - 1)
    stored = float(depth_map[r, c])
    return stored > 0.0 and abs(proj.z - stored) <= eps_d


def _visible_mask(points: np.ndarray, view: CameraView, eps_d: float):
    """Vectorized projection + depth test; returns (u, v, visible flags)."""
    pts = np.asarray(points, dtype=np.float64)
    proj = _camera_rows(view)
    homo = np.concatenate([pts, np.ones((pts.shape[0], 1))], axis=1)
    p = homo @ proj.T
    z = p[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(z != 0.0, p[:, 0] / z, np.inf)
        v = np.where(z != 0.0, p[:, 1] / z, np.inf)
    valid = (z > 0) & (u >= 0) & (u < view.width) & (v >= 0) & (v < view.height)
    visible = np.zeros(pts.shape[0], dtype=bool)
    if np.any(valid):
        rows = np.minimum(np.round(v[valid]).astype(np.int64), view.height - 1)
        cols = np.minimum(np.round(u[valid]).astype(np.int64), view.width - 1)
        stored = view.depth_map[rows, cols].astype(np.float64)
        ok = (stored > 0.0) & (np.abs(z[valid] - stored) <= eps_d)
        visible[np.flatnonzero(valid)[ok]] = True
    return u, v, visible


def select_top_views(
    instance_points: np.ndarray,
    views: list[CameraView] | tuple[CameraView, ...],
    k: int = 5,
    eps_d: float = DEFAULT_EPS_D,
    pad: int = DEFAULT_CROP_PAD,
    instance_index: int = 0,
) -> ViewSelection:
    """Rank views by visible-point fraction and emit padded crop rectangles.

    Views with score 0 are excluded; ties break toward the lower view index.
    Raises NoVisibleView when no view sees any point.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pts = np.asarray(instance_points, dtype=np.float64)
    if pts.shape[0] == 0:
        raise NoVisibleView("instance has no points")
    scored: list[tuple[float, int, ViewPick]] = []
    for vid, view in enumerate(views):
        u, v, visible = _visible_mask(pts, view, eps_d)
        count = int(visible.sum())
        if count == 0:
            continue
        score = count / pts.shape[0]
        uu, vv = u[visible], v[visible]
        x0 = max(0, int(np.floor(uu.min())) - pad)
        y0 = max(0, int(np.floor(vv.min())) - pad)
        x1 = min(view.width, int(np.ceil(uu.max())) + 1 + pad)
        y1 = min(view.height, int(np.ceil(vv.max())) + 1 + pad)
        pick = ViewPick(vid, view.image_id, score, (x0, y0, x1, y1))
        scored.append((-score, vid, pick))
    if not scored:
        raise NoVisibleView(f"instance {instance_index} invisible in all views")
    scored.sort(key=lambda t: (t[0], t[1]))
    return ViewSelection(instance_index, tuple(pick for _, _, pick in scored[:k]))
