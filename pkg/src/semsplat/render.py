"""Forward tile rasterizer: RGB, opacity-threshold depth, and confidence images.

Splatting constants are fixed for reproducibility: opacity capped at 0.99,
contributions below 1/255 skipped, per-pixel blending stops once transmittance
drops under 1e-4, a +0.3 px^2 low-pass term is added to the projected
covariance diagonal, and a splat's footprint is the 3-sigma ellipse
(Mahalanobis q <= 9), applied per pixel so output is independent of tiling.

Depth rendering records the camera-space mean depth of the first splat whose
inclusion pushes the accumulated opacity over the threshold; the accumulated
(post-inclusion) opacity is compared, not transmittance.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .scene import Camera, Gaussian, GaussianScene, covariance, covariances, quats_to_rotmats

ALPHA_CAP = 0.99
ALPHA_SKIP = 1.0 / 255.0
T_STOP = 1e-4
LOWPASS = 0.3
FOOTPRINT_Q = 9.0  # 3-sigma Mahalanobis cut
TILE = 16
Z_NEAR = 0.01

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)


@dataclass(frozen=True)
class Splat2D:
    """A Gaussian's projected 2D footprint."""

    mean2d: np.ndarray   # (2,) pixels
    cov2d: np.ndarray    # (2,2) pixels^2, low-pass already added
    depth: float         # camera-space z
    opacity: float


@dataclass(frozen=True)
class DepthMap:
    depth: np.ndarray  # (H,W) float64, +inf where invalid
    valid: np.ndarray  # (H,W) bool
    event_gaussian: np.ndarray  # (H,W) int64 index of the recording Gaussian, -1 invalid


@dataclass(frozen=True)
class RenderedImage:
    channels: np.ndarray  # (H,W,K) float64
    alpha: np.ndarray     # (H,W) float64 accumulated opacity


def perspective_jacobian(p_cam: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """2x3 Jacobian of the pinhole projection at a camera-space point."""
    x, y, z = p_cam
    return np.array([
        [fx / z, 0.0, -fx * x / (z * z)],
        [0.0, fy / z, -fy * y / (z * z)],
    ])


def project_gaussian(g: Gaussian, cam: Camera, z_near: float = Z_NEAR) -> Splat2D | None:
    """Project one Gaussian; returns None when culled (behind camera or off-image)."""
    p_cam = cam.rotation @ g.position.astype(np.float64) + cam.translation
    z = p_cam[2]
    if z <= z_near:
        return None
    mean2d = np.array([cam.fx * p_cam[0] / z + cam.cx, cam.fy * p_cam[1] / z + cam.cy])
    J = perspective_jacobian(p_cam, cam.fx, cam.fy)
    W = cam.rotation
    cov_cam = W @ covariance(g) @ W.T
    cov2d = J @ cov_cam @ J.T + LOWPASS * np.eye(2)
    radius = 3.0 * np.sqrt(_max_eigenvalue_2x2(cov2d))
    if (mean2d[0] + radius < 0 or mean2d[0] - radius > cam.width
            or mean2d[1] + radius < 0 or mean2d[1] - radius > cam.height):
        return None
    return Splat2D(mean2d=mean2d, cov2d=cov2d, depth=float(z), opacity=g.opacity)


def _max_eigenvalue_2x2(m) -> float:
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    mid = 0.5 * (a + c)
    return mid + np.sqrt(max(0.0, (0.5 * (a - c)) ** 2 + b * b))


def eval_sh(sh: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Evaluate per-channel spherical harmonics toward a unit direction.

    Returns rgb = clamp(sum_lm c_lm Y_lm(dir) + 0.5, 0, 1).
    """
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-4:
        raise ContractError("direction must be unit length")
    rgb = eval_sh_batch(np.asarray(sh, dtype=np.float64)[None], d[None])
    return rgb[0]


def eval_sh_batch(sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Vectorized SH evaluation: sh (N,3,B), dirs (N,3) unit -> rgb (N,3) in [0,1]."""
    sh = np.asarray(sh, dtype=np.float64)
    basis = sh.shape[2]
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    rgb = SH_C0 * sh[:, :, 0]
    if basis > 1:
        rgb = rgb - SH_C1 * y[:, None] * sh[:, :, 1]
        rgb = rgb + SH_C1 * z[:, None] * sh[:, :, 2]
        rgb = rgb - SH_C1 * x[:, None] * sh[:, :, 3]
    if basis > 4:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        rgb = (rgb
               + SH_C2[0] * (xy)[:, None] * sh[:, :, 4]
               + SH_C2[1] * (yz)[:, None] * sh[:, :, 5]
               + SH_C2[2] * (2 * zz - xx - yy)[:, None] * sh[:, :, 6]
               + SH_C2[3] * (xz)[:, None] * sh[:, :, 7]
               + SH_C2[4] * (xx - yy)[:, None] * sh[:, :, 8])
    if basis > 9:
        rgb = (rgb
               + SH_C3[0] * (y * (3 * xx - yy))[:, None] * sh[:, :, 9]
               + SH_C3[1] * (xy * z)[:, None] * sh[:, :, 10]
               + SH_C3[2] * (y * (4 * zz - xx - yy))[:, None] * sh[:, :, 11]
               + SH_C3[3] * (z * (2 * zz - 3 * xx - 3 * yy))[:, None] * sh[:, :, 12]
               + SH_C3[4] * (x * (4 * zz - xx - yy))[:, None] * sh[:, :, 13]
               + SH_C3[5] * (z * (xx - yy))[:, None] * sh[:, :, 14]
               + SH_C3[6] * (x * (xx - 3 * yy))[:, None] * sh[:, :, 15])
    return np.clip(rgb + 0.5, 0.0, 1.0)


@dataclass
class _SplatBatch:
    """Visible splats for one view, globally sorted front to back."""

    index: np.ndarray    # original Gaussian indices
    mx: np.ndarray
    my: np.ndarray
    inv_a: np.ndarray    # inverse 2x2 covariance entries: [[a, b], [b, c]]
    inv_b: np.ndarray
    inv_c: np.ndarray
    z: np.ndarray
    opacity: np.ndarray
    x0: np.ndarray       # inclusive pixel bounds of the footprint
    x1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray


def prepare_splats(scene: GaussianScene, cam: Camera, z_near: float = Z_NEAR) -> _SplatBatch:
    """Project all Gaussians, cull, and sort by depth (ties keep index order)."""
    n = len(scene)
    if n == 0:
        return _empty_batch()
    p_cam = cam.to_camera(scene.positions)
    z = p_cam[:, 2]
    keep = z > z_near
    if not keep.any():
        return _empty_batch()
    idx = np.where(keep)[0]
    p = p_cam[idx]
    zk = z[idx]
    mx = cam.fx * p[:, 0] / zk + cam.cx
    my = cam.fy * p[:, 1] / zk + cam.cy

    W = cam.rotation
    cov_cam = W @ covariances(scene)[idx] @ W.T
    fxz = cam.fx / zk
    fyz = cam.fy / zk
    jx2 = -cam.fx * p[:, 0] / (zk * zk)
    jy2 = -cam.fy * p[:, 1] / (zk * zk)
    # rows of J per splat: (fx/z, 0, jx2) and (0, fy/z, jy2)
    r0 = np.stack([fxz, np.zeros_like(fxz), jx2], axis=1)
    r1 = np.stack([np.zeros_like(fyz), fyz, jy2], axis=1)
    c0 = np.einsum("ni,nij->nj", r0, cov_cam)
    c1 = np.einsum("ni,nij->nj", r1, cov_cam)
    a = np.einsum("ni,ni->n", c0, r0) + LOWPASS
    b = np.einsum("ni,ni->n", c0, r1)
    c = np.einsum("ni,ni->n", c1, r1) + LOWPASS

    mid = 0.5 * (a + c)
    lam = mid + np.sqrt(np.maximum(0.0, (0.5 * (a - c)) ** 2 + b * b))
    radius = 3.0 * np.sqrt(lam)
    x0 = np.floor(mx - radius - 0.5).astype(np.int64)
    x1 = np.ceil(mx + radius - 0.5).astype(np.int64)
    y0 = np.floor(my - radius - 0.5).astype(np.int64)
    y1 = np.ceil(my + radius - 0.5).astype(np.int64)
    np.clip(x0, 0, cam.width - 1, out=x0)
    np.clip(x1, -1, cam.width - 1, out=x1)
    np.clip(y0, 0, cam.height - 1, out=y0)
    np.clip(y1, -1, cam.height - 1, out=y1)
    onimg = ((mx + radius >= 0) & (mx - radius <= cam.width)
             & (my + radius >= 0) & (my - radius <= cam.height)
             & (x1 >= x0) & (y1 >= y0))
    if not onimg.any():
        return _empty_batch()

    det = a * c - b * b
    order = np.argsort(zk[onimg], kind="stable")
    sel = np.where(onimg)[0][order]
    return _SplatBatch(
        index=idx[sel], mx=mx[sel], my=my[sel],
        inv_a=(c / det)[sel], inv_b=(-b / det)[sel], inv_c=(a / det)[sel],
        z=zk[sel], opacity=scene.opacities.astype(np.float64)[idx[sel]],
        x0=x0[sel], x1=x1[sel], y0=y0[sel], y1=y1[sel],
    )


def _empty_batch() -> _SplatBatch:
    e = np.empty(0, dtype=np.float64)
    i = np.empty(0, dtype=np.int64)
    return _SplatBatch(index=i, mx=e, my=e, inv_a=e, inv_b=e, inv_c=e, z=e,
                       opacity=e, x0=i, x1=i, y0=i, y1=i)


def _tile_lists(batch: _SplatBatch, width: int, height: int) -> dict:
    """Map tile coords -> splat positions (in batch order, i.e. front-to-back)."""
    tiles: dict[tuple[int, int], list[int]] = {}
    tx0 = batch.x0 // TILE
    tx1 = batch.x1 // TILE
    ty0 = batch.y0 // TILE
    ty1 = batch.y1 // TILE
    for s in range(batch.z.shape[0]):
        for ty in range(ty0[s], ty1[s] + 1):
            for tx in range(tx0[s], tx1[s] + 1):
                tiles.setdefault((tx, ty), []).append(s)
    return tiles


def _tile_alpha(batch: _SplatBatch, sub: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Effective alphas (S, th, tw) for a tile; skipped contributions are zero."""
    dx = xs[None, None, :] - batch.mx[sub, None, None]
    dy = ys[None, :, None] - batch.my[sub, None, None]
    q = (batch.inv_a[sub, None, None] * dx * dx
         + 2.0 * batch.inv_b[sub, None, None] * dx * dy
         + batch.inv_c[sub, None, None] * dy * dy)
    alpha = np.minimum(ALPHA_CAP, batch.opacity[sub, None, None] * np.exp(-0.5 * q))
    alpha[(alpha < ALPHA_SKIP) | (q > FOOTPRINT_Q)] = 0.0
    return alpha


def _blend(batch: _SplatBatch, values: np.ndarray, width: int, height: int,
           background: np.ndarray | None, workers: int) -> RenderedImage:
    """Front-to-back alpha blending of per-splat channel vectors."""
    k = values.shape[1]
    channels = np.zeros((height, width, k), dtype=np.float64)
    alpha_map = np.zeros((height, width), dtype=np.float64)
    tvals = np.ones((height, width), dtype=np.float64)
    tiles = _tile_lists(batch, width, height)

    def run(item):
        (tx, ty), members = item
        xl, yl = tx * TILE, ty * TILE
        xh, yh = min(xl + TILE, width), min(yl + TILE, height)
        xs = np.arange(xl, xh, dtype=np.float64) + 0.5
        ys = np.arange(yl, yh, dtype=np.float64) + 0.5
        sub = np.asarray(members, dtype=np.int64)
        eff = _tile_alpha(batch, sub, xs, ys)
        trans = np.cumprod(1.0 - eff, axis=0)
        t_excl = np.concatenate([np.ones((1, ys.size, xs.size)), trans[:-1]], axis=0)
        active = t_excl >= T_STOP
        w = eff * t_excl * active
        channels[yl:yh, xl:xh] += np.einsum("spq,sk->pqk", w, values[sub])
        alpha_map[yl:yh, xl:xh] += w.sum(axis=0)
        n_active = active.sum(axis=0)
        t_full = np.concatenate([np.ones((1, ys.size, xs.size)), trans], axis=0)
        tvals[yl:yh, xl:xh] = np.take_along_axis(t_full, n_active[None], axis=0)[0]

    _run_tiles(run, tiles, workers)
    if background is not None:
        channels += tvals[:, :, None] * background[None, None, :]
    return RenderedImage(channels=channels, alpha=alpha_map)


def _run_tiles(fn, tiles: dict, workers: int) -> None:
    items = list(tiles.items())
    if workers <= 1 or len(items) <= 1:
        for item in items:
            fn(item)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(fn, items))


def render_rgb(scene: GaussianScene, cam: Camera, background=(0.0, 0.0, 0.0),
               z_near: float = Z_NEAR, workers: int = 1) -> RenderedImage:
    """Render an RGB view with SH colors composited over a background."""
    batch = prepare_splats(scene, cam, z_near)
    if batch.z.size == 0:
        bg = np.asarray(background, dtype=np.float64)
        return RenderedImage(
            channels=np.tile(bg, (cam.height, cam.width, 1)),
            alpha=np.zeros((cam.height, cam.width), dtype=np.float64),
        )
    dirs = scene.positions[batch.index].astype(np.float64) - cam.center
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
    colors = eval_sh_batch(scene.sh[batch.index], dirs)
    return _blend(batch, colors, cam.width, cam.height,
                  np.asarray(background, dtype=np.float64), workers)


def render_confidence(scene: GaussianScene, cam: Camera, conf: np.ndarray,
                      z_near: float = Z_NEAR, workers: int = 1) -> RenderedImage:
    """Blend per-Gaussian channel vectors exactly like RGB (no background)."""
    conf = np.asarray(conf, dtype=np.float64)
    if conf.ndim != 2 or conf.shape[0] != len(scene):
        raise ContractError(
            f"confidence matrix has shape {conf.shape}, expected ({len(scene)}, K)")
    batch = prepare_splats(scene, cam, z_near)
    if batch.z.size == 0:
        return RenderedImage(
            channels=np.zeros((cam.height, cam.width, conf.shape[1]), dtype=np.float64),
            alpha=np.zeros((cam.height, cam.width), dtype=np.float64),
        )
    return _blend(batch, conf[batch.index], cam.width, cam.height, None, workers)


def render_depth(scene: GaussianScene, cam: Camera, alpha_d: float = 0.5,
                 z_near: float = Z_NEAR, workers: int = 1) -> DepthMap:
    """Opacity-threshold depth: mean z of the first splat pushing accumulated
    opacity to ``alpha_d``; pixels never reaching it are invalid (+inf)."""
    if not 0.0 < alpha_d < 1.0:
        raise ContractError(f"alpha_d must lie in (0, 1), got {alpha_d}")
    depth = np.full((cam.height, cam.width), np.inf, dtype=np.float64)
    source = np.full((cam.height, cam.width), -1, dtype=np.int64)
    batch = prepare_splats(scene, cam, z_near)
    if batch.z.size == 0:
        return DepthMap(depth=depth, valid=np.zeros_like(depth, dtype=bool),
                        event_gaussian=source)
    tiles = _tile_lists(batch, cam.width, cam.height)

    def run(item):
        (tx, ty), members = item
        xl, yl = tx * TILE, ty * TILE
        xh, yh = min(xl + TILE, cam.width), min(yl + TILE, cam.height)
        xs = np.arange(xl, xh, dtype=np.float64) + 0.5
        ys = np.arange(yl, yh, dtype=np.float64) + 0.5
        sub = np.asarray(members, dtype=np.int64)
        eff = _tile_alpha(batch, sub, xs, ys)
        trans = np.cumprod(1.0 - eff, axis=0)
        t_excl = np.concatenate([np.ones((1, ys.size, xs.size)), trans[:-1]], axis=0)
        accum = np.cumsum(eff * t_excl, axis=0)
        hit = accum >= alpha_d
        event = hit.argmax(axis=0)  # first splat reaching the threshold
        any_hit = hit.any(axis=0)
        depth[yl:yh, xl:xh] = np.where(any_hit, batch.z[sub][event], np.inf)
        source[yl:yh, xl:xh] = np.where(any_hit, batch.index[sub][event], -1)

    _run_tiles(run, tiles, workers)
    return DepthMap(depth=depth, valid=np.isfinite(depth), event_gaussian=source)


def class_labels(img: RenderedImage, min_alpha: float = 0.5) -> np.ndarray:
    """Per-pixel argmax class of a confidence image; -1 under ``min_alpha`` coverage."""
    labels = img.channels.argmax(axis=2).astype(np.int32)
    labels[img.alpha < min_alpha] = -1
    return labels
