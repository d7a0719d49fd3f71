"""Adapter jobs: turn images into toolkit files, one output per view index."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .backends import make_backend
from .errors import AdapterError
from .formats import write_feature_map, write_id_png, write_mask_set

KINDS = ("pixel", "instance", "image", "idmap")
CROP_SIZE = 224


@dataclass(frozen=True)
class AdapterJob:
    images: tuple            # input image paths, output index = list position
    kind: str                # pixel | instance | image | idmap
    out_dir: Path
    channels: int = 16
    backend: str = "colorstats"
    seed: int = 0
    half: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise AdapterError(f"unknown job kind {self.kind!r}; expected {KINDS}")
        if not self.images:
            raise AdapterError("job has no input images")


def load_rgb(path) -> np.ndarray:
    try:
        img = Image.open(path).convert("RGB")
    except OSError as e:
        raise AdapterError(f"cannot read image {path}: {e}") from e
    return np.asarray(img, dtype=np.float64) / 255.0


def square_pad_resize(rgb: np.ndarray, size: int = CROP_SIZE) -> np.ndarray:
    """Square-pad with edge replication, then resize; for image-level crops."""
    h, w = rgb.shape[:2]
    side = max(h, w)
    top = (side - h) // 2
    left = (side - w) // 2
    padded = np.pad(rgb, ((top, side - h - top), (left, side - w - left), (0, 0)),
                    mode="edge")
    img = Image.fromarray((np.clip(padded, 0, 1) * 255).astype(np.uint8))
    return np.asarray(img.resize((size, size), Image.BILINEAR), dtype=np.float64) / 255.0


def quantized_components(rgb: np.ndarray, levels: int = 4, min_area: int = 32):
    """Deterministic region proposals: connected components of quantized color.

    A stand-in segmenter for environments without a promptable mask model;
    regions are 4-connected components of the color-quantized image.
    """
    q = np.minimum((rgb * levels).astype(np.int32), levels - 1)
    key = q[..., 0] * levels * levels + q[..., 1] * levels + q[..., 2]
    h, w = key.shape
    labels = np.full((h, w), -1, dtype=np.int64)
    current = 0
    for sy in range(h):
        for sx in range(w):
            if labels[sy, sx] >= 0:
                continue
            stack = [(sy, sx)]
            labels[sy, sx] = current
            val = key[sy, sx]
            while stack:
                y, x = stack.pop()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if (0 <= ny < h and 0 <= nx < w and labels[ny, nx] < 0
                            and key[ny, nx] == val):
                        labels[ny, nx] = current
                        stack.append((ny, nx))
            current += 1
    masks = []
    next_id = 1
    for comp in range(current):
        mask = labels == comp
        if mask.sum() >= min_area:
            masks.append({"id": next_id, "mask": mask})
            next_id += 1
    return masks


def export_features(job: AdapterJob) -> list:
    """Run the job; returns the list of files written."""
    backend = make_backend(job.backend, channels=job.channels, seed=job.seed)
    if getattr(backend, "channels", job.channels) != job.channels and job.kind != "idmap":
        raise AdapterError(
            f"backend {backend.name} produces {backend.channels} channels, "
            f"job declares {job.channels}")
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for index, image_path in enumerate(job.images):
        rgb = load_rgb(image_path)
        if job.kind == "pixel":
            feats = backend.encode_image(rgb)
            out = out_dir / f"{index:04d}.sgfm"
            write_feature_map(out, feats,
                              assigned=np.ones(feats.shape[:2], dtype=np.uint8),
                              half=job.half)
        elif job.kind in ("instance", "image"):
            masks = quantized_components(rgb)
            for m in masks:
                if job.kind == "instance":
                    region = rgb[m["mask"]]
                    pooled = backend.encode_image(rgb)[m["mask"]].astype(np.float64).mean(axis=0)
                    n = np.linalg.norm(pooled)
                    if n < 1e-8:
                        raise AdapterError(
                            f"mask {m['id']} in {image_path} has a zero embedding")
                    m["embedding"] = (pooled / n).astype(np.float32)
                else:
                    ys, xs = np.nonzero(m["mask"])
                    crop = rgb[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
                    m["embedding"] = backend.encode_patch(square_pad_resize(crop))
            out = out_dir / f"{index:04d}.masks.json"
            write_mask_set(out, masks)
        else:  # idmap
            masks = quantized_components(rgb)
            ids = np.zeros(rgb.shape[:2], dtype=np.uint16)
            for m in masks:
                ids[m["mask"]] = m["id"]
            out = out_dir / f"{index:04d}.png"
            write_id_png(out, ids)
        written.append(out)
    return written
