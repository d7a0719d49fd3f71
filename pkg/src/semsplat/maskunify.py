"""Turn heterogeneous 2D model outputs into uniform per-pixel feature maps.

Three source kinds are supported: dense per-pixel features (smoothed within
each mask), per-mask embeddings from instance-level models, and per-region
embeddings from image-level models. Masks are applied in descending area
order so finer masks overwrite coarser ones; mask means are taken from the
input map, not the running output, so fine masks keep their own statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError
from .formats import read_feature_map, write_feature_map

MODES = ("pixel", "instance", "image")


@dataclass(frozen=True)
class FeatureMap:
    """Dense H x W x C feature image with a per-pixel assignment flag."""

    data: np.ndarray      # (H,W,C) float32, zero where unassigned
    assigned: np.ndarray  # (H,W) bool

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        assigned = np.ascontiguousarray(self.assigned, dtype=bool)
        if data.ndim != 3 or assigned.shape != data.shape[:2]:
            raise ContractError(
                f"feature map shapes inconsistent: data {data.shape}, mask {assigned.shape}")
        if not np.isfinite(data).all():
            raise DataError("feature map contains non-finite values")
        if (~assigned).any() and data[~assigned].any():
            raise DataError("unassigned pixels must be exactly zero")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "assigned", assigned)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def full(cls, data: np.ndarray) -> "FeatureMap":
        data = np.asarray(data, dtype=np.float32)
        return cls(data=data, assigned=np.ones(data.shape[:2], dtype=bool))

    def save(self, path) -> None:
        write_feature_map(path, self.data, self.assigned.astype(np.uint8))

    @classmethod
    def load(cls, path) -> "FeatureMap":
        data, assigned = read_feature_map(path)
        if assigned is None:
            assigned = np.ones(data.shape[:2], dtype=bool)
        else:
            data = data.copy()
            data[~assigned] = 0.0
        return cls(data=data, assigned=assigned)


@dataclass(frozen=True)
class Mask:
    id: int
    mask: np.ndarray                    # (H,W) bool
    embedding: np.ndarray | None = None

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass
class MaskSet:
    masks: list = field(default_factory=list)

    @classmethod
    def from_records(cls, records) -> "MaskSet":
        return cls(masks=[
            Mask(id=r["id"], mask=np.asarray(r["mask"], dtype=bool),
                 embedding=None if r.get("embedding") is None
                 else np.asarray(r["embedding"], dtype=np.float32))
            for r in records
        ])

    def by_descending_area(self):
        # stable: equal areas keep ascending id order
        return sorted(self.masks, key=lambda m: (-m.area, m.id))


def unify(source, masks: MaskSet, mode: str) -> FeatureMap:
    """Produce a per-pixel feature map from a source and a mask set.

    pixel mode     source is a FeatureMap; every mask's pixels are replaced by
                   the mask's mean feature (computed over the source's assigned
                   pixels). Pixels outside all masks keep their raw features.
    instance mode  masks carry embeddings; each mask's pixels take the mask
                   embedding. Uncovered pixels stay unassigned.
    image mode     identical assignment semantics to instance mode; the
                   embeddings come from region crops instead of detections.
    """
    if mode not in MODES:
        raise ContractError(f"unknown unify mode {mode!r}; expected one of {MODES}")
    if mode == "pixel":
        return _unify_pixel(source, masks)
    return _unify_embedding(source, masks, mode)


def _check_mask_dims(masks: MaskSet, h: int, w: int) -> None:
    for m in masks.masks:
        if m.mask.shape != (h, w):
            raise ContractError(
                f"mask {m.id} has shape {m.mask.shape}, expected {(h, w)}")


def _unify_pixel(source: FeatureMap, masks: MaskSet) -> FeatureMap:
    if not isinstance(source, FeatureMap):
        raise ContractError("pixel mode requires a FeatureMap source")
    _check_mask_dims(masks, source.height, source.width)
    out = source.data.copy()
    assigned = source.assigned.copy()
    src64 = source.data.astype(np.float64)
    for m in masks.by_descending_area():
        sel = m.mask & source.assigned
        if not sel.any():
            continue
        mean = src64[sel].mean(axis=0)
        out[m.mask] = mean.astype(np.float32)
        assigned |= m.mask
    return FeatureMap(data=out, assigned=assigned)


def _unify_embedding(source, masks: MaskSet, mode: str) -> FeatureMap:
    del source  # embeddings ride on the masks
    if not masks.masks:
        raise ContractError(f"{mode} mode requires at least one mask")
    dims = set()
    for m in masks.masks:
        if m.embedding is None:
            raise ContractError(f"{mode} mode requires an embedding on mask {m.id}")
        dims.add(m.embedding.shape[-1])
    if len(dims) != 1:
        raise ContractError(f"masks carry inconsistent embedding widths {sorted(dims)}")
    c = dims.pop()
    h, w = masks.masks[0].mask.shape
    _check_mask_dims(masks, h, w)
    out = np.zeros((h, w, c), dtype=np.float32)
    assigned = np.zeros((h, w), dtype=bool)
    for m in masks.by_descending_area():
        out[m.mask] = m.embedding.reshape(-1)
        assigned |= m.mask
    return FeatureMap(data=out, assigned=assigned)


def one_hot_ids(id_map: np.ndarray, num_ids: int) -> FeatureMap:
    """Instance-id image -> one-hot feature map; id 0 is background (unassigned)."""
    ids = np.asarray(id_map)
    if ids.ndim != 2 or not np.issubdtype(ids.dtype, np.integer):
        raise ContractError("id map must be a 2-D integer array")
    bad = (ids < 0) | (ids > num_ids)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise DataError(
            f"id {int(ids[y, x])} at pixel (x={int(x)}, y={int(y)}) outside [0, {num_ids}]")
    h, w = ids.shape
    data = np.zeros((h, w, num_ids), dtype=np.float32)
    assigned = ids > 0
    ys, xs = np.nonzero(assigned)
    data[ys, xs, ids[ys, xs] - 1] = 1.0
    return FeatureMap(data=data, assigned=assigned)
