"""Synthetic labeled scenes, oracle feature maps, and segmentation metrics.

Scenes are clusters of random Gaussians inside separated primitive volumes
(boxes and spheres), one class per object, with cameras on a surrounding
sphere aimed at the centroid. Ground-truth label images render through the
same splatting path as predictions, so metrics compare like with like.
Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .maskunify import FeatureMap
from .render import class_labels, render_confidence
from .scene import SH_C0, Camera, GaussianScene, logistic
from .query import UNKNOWN

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the synthetic scene generator."""

    min_objects: int = 3
    max_objects: int = 8
    primitives: tuple = ("box", "sphere")
    gaussians_per_object: int = 150
    channels: int = 16
    feature_noise: float = 0.1
    num_cameras: int = 20
    image_size: int = 64
    object_radius: float = 0.22
    center_extent: float = 0.55
    camera_radius: float = 2.6

    def __post_init__(self):
        if self.min_objects < 1 or self.max_objects < self.min_objects:
            raise ContractError("invalid object count range")
        if self.feature_noise < 0:
            raise ContractError("feature noise must be >= 0")


@dataclass(frozen=True)
class SynthScene:
    scene: GaussianScene
    labels: np.ndarray        # (N,) int32 class per Gaussian
    cameras: list
    prototypes: np.ndarray    # (K, C) exactly orthonormal rows
    class_names: list = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]


def prototype_embeddings(num_classes: int, channels: int, seed: int) -> np.ndarray:
    """K mutually orthonormal unit rows (requires K <= C)."""
    if num_classes > channels:
        raise ContractError(
            f"cannot build {num_classes} near-orthogonal prototypes in {channels} dims")
    rng = np.random.default_rng(seed)
    mat = rng.standard_normal((channels, num_classes))
    q, _ = np.linalg.qr(mat)
    protos = q.T[:num_classes]
    signs = np.sign(protos[np.arange(num_classes), np.abs(protos).argmax(axis=1)])
    return (protos * signs[:, None]).astype(np.float64)


def class_color(k: int) -> np.ndarray:
    """Deterministic, well-separated RGB color for a class id."""
    hue = (k * 0.61803398875) % 1.0
    return np.array(colorsys.hsv_to_rgb(hue, 0.85, 0.95))


def _fibonacci_directions(n: int) -> np.ndarray:
    i = np.arange(n, dtype=np.float64)
    y = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    phi = i * GOLDEN_ANGLE
    return np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=1)


def look_at_camera(position, target, width: int, height: int, fx: float) -> Camera:
    """Camera at ``position`` with its optical axis through ``target``."""
    position = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - position
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(up, z)) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    E = np.eye(4)
    E[:3, :3] = R
    E[:3, 3] = -R @ position
    return Camera(width=width, height=height, fx=fx, fy=fx,
                  cx=width / 2.0, cy=height / 2.0, world_to_camera=E)


def _place_centers(rng, n: int, extent: float, min_dist: float) -> np.ndarray:
    centers = []
    for _ in range(20000):
        cand = rng.uniform(-extent, extent, size=3)
        if all(np.linalg.norm(cand - c) >= min_dist for c in centers):
            centers.append(cand)
            if len(centers) == n:
                return np.asarray(centers)
    raise ContractError(
        f"could not place {n} objects with separation {min_dist} in extent {extent}")


def synth_scene(spec: SyntheticSpec, seed: int,
                prototypes: np.ndarray | None = None) -> SynthScene:
    """Generate a labeled scene, its cameras, and class prototype embeddings.

    Passing ``prototypes`` pins the class set (and its count) so several scenes
    can share one embedding space; otherwise prototypes derive from the seed.
    """
    rng = np.random.default_rng(seed)
    if prototypes is None:
        k = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    else:
        prototypes = np.asarray(prototypes, dtype=np.float64)
        k = prototypes.shape[0]
    centers = _place_centers(rng, k, spec.center_extent, 2.0 * spec.object_radius + 0.2)
    m = spec.gaussians_per_object

    positions, labels = [], []
    rotations, scales, opacities, sh = [], [], [], []
    for obj in range(k):
        kind = spec.primitives[int(rng.integers(0, len(spec.primitives)))]
        if kind == "sphere":
            dirs = rng.standard_normal((m, 3))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            radii = spec.object_radius * np.cbrt(rng.uniform(0.0, 1.0, size=m))
            pts = centers[obj] + dirs * radii[:, None]
        else:
            pts = centers[obj] + rng.uniform(-spec.object_radius, spec.object_radius,
                                             size=(m, 3))
        positions.append(pts)
        labels.append(np.full(m, obj, dtype=np.int32))
        quats = rng.standard_normal((m, 4))
        quats /= np.linalg.norm(quats, axis=1, keepdims=True)
        rotations.append(quats)
        # float32 pre-activations keep saved scenes bit-identical to in-memory ones
        log_s = rng.uniform(np.log(0.02), np.log(0.05), size=(m, 3)).astype(np.float32)
        scales.append(np.exp(log_s.astype(np.float64)))
        opacities.append(logistic(rng.uniform(2.0, 6.0, size=m).astype(np.float32)))
        dc = (class_color(obj) - 0.5) / SH_C0
        sh.append(np.tile(dc[None, :, None], (m, 1, 1)))

    scene = GaussianScene(
        np.concatenate(positions).astype(np.float32),
        np.concatenate(rotations).astype(np.float32),
        np.concatenate(scales).astype(np.float32),
        np.concatenate(opacities).astype(np.float32),
        np.concatenate(sh).astype(np.float32),
    )
    centroid = scene.positions.astype(np.float64).mean(axis=0)
    fx = 0.47 * spec.image_size / np.tan(np.deg2rad(28.0))
    cameras = [
        look_at_camera(centroid + d * spec.camera_radius, centroid,
                       spec.image_size, spec.image_size, fx)
        for d in _fibonacci_directions(spec.num_cameras)
    ]
    if prototypes is None:
        prototypes = prototype_embeddings(k, spec.channels, seed)
    return SynthScene(scene=scene, labels=np.concatenate(labels), cameras=cameras,
                      prototypes=prototypes,
                      class_names=[f"object_{i}" for i in range(k)])


def gt_view_labels(synth: SynthScene, cam: Camera, min_alpha: float = 0.5,
                   workers: int = 1) -> np.ndarray:
    """Ground-truth label image for a view, rendered like any prediction."""
    onehot = np.zeros((len(synth.scene), synth.num_classes), dtype=np.float64)
    onehot[np.arange(len(synth.scene)), synth.labels] = 1.0
    img = render_confidence(synth.scene, cam, onehot, workers=workers)
    return class_labels(img, min_alpha=min_alpha)


def synth_features(synth: SynthScene, cam: Camera, sigma: float, seed: int,
                   workers: int = 1) -> FeatureMap:
    """Oracle per-pixel features: class prototype plus noise on covered pixels.

    ``sigma`` is the total noise scale: the perturbation is an isotropic
    Gaussian with expected norm ~sigma (per-component std sigma/sqrt(C)), so
    the expected cosine to the prototype is 1/sqrt(1 + sigma^2) regardless of
    the embedding width. Features are renormalized to unit length.
    """
    gt = gt_view_labels(synth, cam, workers=workers)
    covered = gt != UNKNOWN
    h, w = gt.shape
    c = synth.prototypes.shape[1]
    data = np.zeros((h, w, c), dtype=np.float64)
    if covered.any():
        feats = synth.prototypes[gt[covered]]
        if sigma > 0:
            rng = np.random.default_rng(seed)
            feats = feats + (sigma / np.sqrt(c)) * rng.standard_normal(feats.shape)
        feats = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        data[covered] = feats
    return FeatureMap(data=data.astype(np.float32), assigned=covered)


def object_box(gt_labels: np.ndarray, class_id: int):
    """Inclusive [x0, y0, x1, y1] bound of a class in a label image, or None."""
    ys, xs = np.nonzero(gt_labels == class_id)
    if xs.size == 0:
        return None
    return [int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())]


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class SegMetrics:
    per_class_iou: np.ndarray  # (K,) float64, NaN for classes absent from GT
    miou: float
    macc: float
    confusion: np.ndarray      # (K, K+1): rows GT, last column = unknown


def miou(pred: np.ndarray, gt: np.ndarray, num_classes: int) -> SegMetrics:
    """IoU/recall over pixels where ground truth is covered.

    Unknown predictions count as false negatives for their GT class; classes
    absent from the ground truth are excluded from the means.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ContractError(f"shape mismatch: pred {pred.shape}, gt {gt.shape}")
    valid = gt != UNKNOWN
    g = gt[valid].astype(np.int64)
    p = pred[valid].astype(np.int64)
    p = np.where(p == UNKNOWN, num_classes, p)
    conf = np.zeros((num_classes, num_classes + 1), dtype=np.int64)
    np.add.at(conf, (g, p), 1)

    tp = np.diag(conf[:, :num_classes]).astype(np.float64)
    gt_count = conf.sum(axis=1).astype(np.float64)
    pred_count = conf[:, :num_classes].sum(axis=0).astype(np.float64)
    present = gt_count > 0
    union = gt_count + pred_count - tp
    iou = np.full(num_classes, np.nan)
    recall = np.full(num_classes, np.nan)
    nz = present & (union > 0)
    iou[nz] = tp[nz] / union[nz]
    recall[present] = tp[present] / gt_count[present]
    return SegMetrics(
        per_class_iou=iou,
        miou=float(np.nanmean(iou[present])) if present.any() else float("nan"),
        macc=float(np.nanmean(recall[present])) if present.any() else float("nan"),
        confusion=conf,
    )


def loc_accuracy(pred_pixels, boxes) -> float:
    """Fraction of predicted pixels inside their (inclusive) ground-truth box."""
    pred_pixels = list(pred_pixels)
    boxes = list(boxes)
    if len(pred_pixels) != len(boxes):
        raise ContractError("one box per predicted pixel is required")
    if not pred_pixels:
        return 0.0
    hits = 0
    for (x, y), (x0, y0, x1, y1) in zip(pred_pixels, boxes):
        if x0 <= x <= x1 and y0 <= y <= y1:
            hits += 1
    return hits / len(pred_pixels)
