"""Pixel-to-Gaussian correspondence and multi-view feature fusion.

A Gaussian matches a pixel in a view when it projects in front of the camera,
inside the image, and within a depth band around the rendered surface:
|z - depth(u)| <= max(tol_abs, tol_rel * depth(u)). Depth maps come from the
renderer's opacity-threshold pass, never from ground-truth sensors.

Fusion keeps a running (sum, count) per Gaussian so views can stream through;
the mean is taken at the end. Views are always reduced in ascending index
order, which makes the result bit-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .maskunify import FeatureMap
from .render import DepthMap, render_depth
from .scene import Camera, GaussianScene, SemanticField

TOL_REL_DEFAULT = 0.05
TOL_ABS_DEFAULT = 0.01


@dataclass(frozen=True)
class ViewMatch:
    """(gaussian, pixel) pairs for one view; each Gaussian appears at most once."""

    gaussians: np.ndarray  # (M,) indices into the scene
    px: np.ndarray         # (M,) pixel column (x)
    py: np.ndarray         # (M,) pixel row (y)


def match_visible(scene: GaussianScene, cam: Camera, depth: DepthMap,
                  tol_rel: float = TOL_REL_DEFAULT,
                  tol_abs: float = TOL_ABS_DEFAULT) -> ViewMatch:
    """Match Gaussians to the pixels they are visible at in one view."""
    if tol_rel <= 0 or tol_abs <= 0:
        raise ContractError("depth tolerances must be positive")
    if depth.depth.shape != (cam.height, cam.width):
        raise ContractError(
            f"depth map shape {depth.depth.shape} does not match camera "
            f"({cam.height}, {cam.width})")
    p_cam = cam.to_camera(scene.positions)
    z = p_cam[:, 2]
    front = z > 0
    u = np.full(len(scene), -1.0)
    v = np.full(len(scene), -1.0)
    u[front] = cam.fx * p_cam[front, 0] / z[front] + cam.cx
    v[front] = cam.fy * p_cam[front, 1] / z[front] + cam.cy
    px = np.floor(u).astype(np.int64)
    py = np.floor(v).astype(np.int64)
    inside = front & (px >= 0) & (px < cam.width) & (py >= 0) & (py < cam.height)
    idx = np.where(inside)[0]
    d = depth.depth[py[idx], px[idx]]
    ok = np.isfinite(d) & (np.abs(z[idx] - d) <= np.maximum(tol_abs, tol_rel * d))
    sel = idx[ok]
    return ViewMatch(gaussians=sel, px=px[sel], py=py[sel])


class FusionAccumulator:
    """Running per-Gaussian feature sums and observation counts."""

    def __init__(self, num_points: int, channels: int):
        self.sums = np.zeros((num_points, channels), dtype=np.float64)
        self.counts = np.zeros(num_points, dtype=np.uint32)

    @property
    def channels(self) -> int:
        return self.sums.shape[1]

    def merge(self, other: "FusionAccumulator") -> "FusionAccumulator":
        if other.sums.shape != self.sums.shape:
            raise ContractError("cannot merge accumulators of different shapes")
        self.sums += other.sums
        self.counts += other.counts
        return self


def accumulate(acc: FusionAccumulator, fmap: FeatureMap,
               matches: ViewMatch) -> FusionAccumulator:
    """Fold one view's matched features into the accumulator.

    Matches landing on unassigned feature-map pixels contribute nothing.
    """
    if fmap.channels != acc.channels:
        raise ContractError(
            f"feature map has {fmap.channels} channels, accumulator {acc.channels}")
    if matches.gaussians.size == 0:
        return acc
    keep = fmap.assigned[matches.py, matches.px]
    g = matches.gaussians[keep]
    acc.sums[g] += fmap.data[matches.py[keep], matches.px[keep]].astype(np.float64)
    acc.counts[g] += 1
    return acc


def finalize(acc: FusionAccumulator) -> SemanticField:
    """Mean-pool the accumulated features into a semantic field."""
    counts = acc.counts.astype(np.int64)
    emb = np.zeros_like(acc.sums)
    obs = counts > 0
    emb[obs] = acc.sums[obs] / counts[obs, None]
    return SemanticField(embeddings=emb.astype(np.float32),
                         counts=acc.counts.copy(), normalized=False)


def project_scene(scene: GaussianScene, views, alpha_d: float = 0.5,
                  tol_rel: float = TOL_REL_DEFAULT, tol_abs: float = TOL_ABS_DEFAULT,
                  workers: int = 1) -> SemanticField:
    """Project per-view feature maps onto the scene and average-pool them.

    ``views`` is a sequence of (Camera, FeatureMap) pairs, processed in
    ascending index order.
    """
    views = list(views)
    if not views:
        raise ContractError("project_scene needs at least one view")
    channels = {fmap.channels for _, fmap in views}
    if len(channels) != 1:
        raise ContractError(f"views carry inconsistent channel widths {sorted(channels)}")
    acc = FusionAccumulator(len(scene), channels.pop())
    for cam, fmap in views:
        if (fmap.height, fmap.width) != (cam.height, cam.width):
            raise ContractError(
                f"feature map {fmap.height}x{fmap.width} does not match camera "
                f"{cam.height}x{cam.width}")
        depth = render_depth(scene, cam, alpha_d=alpha_d, workers=workers)
        matches = match_visible(scene, cam, depth, tol_rel=tol_rel, tol_abs=tol_abs)
        accumulate(acc, fmap, matches)
    return finalize(acc)
