"""Binary container formats used across the toolkit.

All containers are little-endian with a 4-byte ASCII magic:

SGFM  per-pixel feature map
      magic, u32 version=1, u32 H, u32 W, u32 C, u8 dtype (0=f32, 1=f16),
      u8 has_assigned_mask, pad to 8-byte alignment, H*W*C values row-major,
      then (if flagged) H*W bytes of 0/1 assignment.

SGSF  per-Gaussian semantic field
      magic, u32 version=1, u32 N, u32 C, u8 dtype (0=f32), u8 normalized,
      pad to 8-byte alignment, N*C f32 values, then N u32 counts.

SGTE  text query set
      magic, u32 K, u32 C, K null-terminated UTF-8 labels, K*C f32 rows.
      A JSON file {"labels": [...], "embeddings": [[...]]} is also accepted.

SGNW  sparse-network checkpoint
      magic, u32 version=1, u32 n_layers, per layer (u32 in_ch, u32 out_ch,
      u32 taps), u32 out_channels, u32 in_features, f32 voxel_size, then per
      layer the f32 weights (taps*in_ch*out_ch) followed by f32 biases.

Mask sets are stored as 16-bit label PNGs plus a JSON sidecar; see
``read_mask_set`` / ``write_mask_set``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, DataError, FormatError

_ALIGN = 8
UNIT_ROW_TOL_TEXT = 1e-5


def _pad_to(f, align: int) -> None:
    pos = f.tell()
    rem = pos % align
    if rem:
        f.write(b"\x00" * (align - rem))


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: {what} needs {n} bytes, found {len(buf)}")
    return buf


def _skip_padding(f, align: int) -> None:
    pos = f.tell()
    rem = pos % align
    if rem:
        _read_exact(f, align - rem, "header padding")


# ---------------------------------------------------------------------------
# SGFM feature maps


def write_feature_map(path, data: np.ndarray, assigned: np.ndarray | None = None,
                      half: bool = False) -> None:
    data = np.ascontiguousarray(data, dtype=np.float16 if half else np.float32)
    if data.ndim != 3:
        raise ContractError(f"feature map must be HxWxC, got shape {data.shape}")
    h, w, c = data.shape
    if assigned is not None:
        assigned = np.ascontiguousarray(assigned, dtype=np.uint8)
        if assigned.shape != (h, w):
            raise ContractError("assigned mask shape does not match feature map")
    with open(path, "wb") as f:
        f.write(b"SGFM")
        f.write(struct.pack("<IIII", 1, h, w, c))
        f.write(struct.pack("<BB", 1 if half else 0, 0 if assigned is None else 1))
        _pad_to(f, _ALIGN)
        f.write(data.tobytes())
        if assigned is not None:
            f.write(assigned.tobytes())


def read_feature_map(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Returns (data HxWxC float32, assigned HxW bool or None)."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != b"SGFM":
            raise FormatError(f"bad magic {magic!r}, expected b'SGFM'")
        version, h, w, c = struct.unpack("<IIII", _read_exact(f, 16, "header"))
        if version != 1:
            raise FormatError(f"unsupported SGFM version {version}")
        dtype_code, has_mask = struct.unpack("<BB", _read_exact(f, 2, "header"))
        if dtype_code not in (0, 1):
            raise FormatError(f"unknown SGFM dtype code {dtype_code}")
        _skip_padding(f, _ALIGN)
        dt = np.dtype("<f4") if dtype_code == 0 else np.dtype("<f2")
        raw = _read_exact(f, h * w * c * dt.itemsize, "feature values")
        data = np.frombuffer(raw, dtype=dt).reshape(h, w, c).astype(np.float32)
        assigned = None
        if has_mask:
            mraw = _read_exact(f, h * w, "assignment mask")
            assigned = np.frombuffer(mraw, dtype=np.uint8).reshape(h, w).astype(bool)
    if not np.isfinite(data).all():
        raise DataError(f"feature map {path} contains non-finite values")
    return data, assigned


# ---------------------------------------------------------------------------
# SGSF semantic fields


def write_semantic_field(path, embeddings: np.ndarray, counts: np.ndarray,
                         normalized: bool) -> None:
    emb = np.ascontiguousarray(embeddings, dtype="<f4")
    cnt = np.ascontiguousarray(counts, dtype="<u4")
    if emb.ndim != 2 or cnt.shape != (emb.shape[0],):
        raise ContractError("semantic field arrays have inconsistent shapes")
    n, c = emb.shape
    with open(path, "wb") as f:
        f.write(b"SGSF")
        f.write(struct.pack("<III", 1, n, c))
        f.write(struct.pack("<BB", 0, 1 if normalized else 0))
        _pad_to(f, _ALIGN)
        f.write(emb.tobytes())
        f.write(cnt.tobytes())


def read_semantic_field(path) -> tuple[np.ndarray, np.ndarray, bool]:
    """Returns (embeddings NxC float32, counts N uint32, normalized flag)."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != b"SGSF":
            raise FormatError(f"bad magic {magic!r}, expected b'SGSF'")
        version, n, c = struct.unpack("<III", _read_exact(f, 12, "header"))
        if version != 1:
            raise FormatError(f"unsupported SGSF version {version}")
        dtype_code, normalized = struct.unpack("<BB", _read_exact(f, 2, "header"))
        if dtype_code != 0:
            raise FormatError(f"unknown SGSF dtype code {dtype_code}")
        _skip_padding(f, _ALIGN)
        emb = np.frombuffer(_read_exact(f, n * c * 4, "embedding rows"), dtype="<f4")
        cnt = np.frombuffer(_read_exact(f, n * 4, "counts"), dtype="<u4")
    return emb.reshape(n, c).copy(), cnt.copy(), bool(normalized)


# ---------------------------------------------------------------------------
# SGTE text query sets


def write_text_queries(path, labels: list[str], embeddings: np.ndarray) -> None:
    emb = np.ascontiguousarray(embeddings, dtype="<f4")
    if emb.ndim != 2 or emb.shape[0] != len(labels):
        raise ContractError("label count does not match embedding rows")
    with open(path, "wb") as f:
        f.write(b"SGTE")
        f.write(struct.pack("<II", emb.shape[0], emb.shape[1]))
        for label in labels:
            f.write(label.encode("utf-8") + b"\x00")
        f.write(emb.tobytes())


def read_text_queries(path) -> tuple[list[str], np.ndarray]:
    """Read an SGTE file, or its JSON equivalent, into (labels, K x C rows)."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(4)
    if head != b"SGTE":
        return _read_text_queries_json(path)
    with open(path, "rb") as f:
        _read_exact(f, 4, "magic")
        k, c = struct.unpack("<II", _read_exact(f, 8, "header"))
        labels = []
        for i in range(k):
            chars = bytearray()
            while True:
                b = _read_exact(f, 1, f"label {i}")
                if b == b"\x00":
                    break
                chars.extend(b)
            labels.append(chars.decode("utf-8"))
        emb = np.frombuffer(_read_exact(f, k * c * 4, "embedding rows"), dtype="<f4")
    return labels, emb.reshape(k, c).copy()


def _read_text_queries_json(path: Path) -> tuple[list[str], np.ndarray]:
    try:
        doc = json.loads(path.read_text())
        labels = [str(x) for x in doc["labels"]]
        emb = np.array(doc["embeddings"], dtype=np.float32)
    except (json.JSONDecodeError, KeyError, ValueError, UnicodeDecodeError) as e:
        raise FormatError(f"{path} is neither SGTE nor a query JSON file: {e}") from e
    if emb.ndim != 2 or emb.shape[0] != len(labels):
        raise FormatError(f"{path}: embeddings shape {emb.shape} does not match labels")
    return labels, emb


# ---------------------------------------------------------------------------
# SGNW network checkpoints


def write_checkpoint(path, layer_shapes: list[tuple[int, int, int]],
                     weights: list[np.ndarray], biases: list[np.ndarray],
                     out_channels: int, in_features: int, voxel_size: float) -> None:
    with open(path, "wb") as f:
        f.write(b"SGNW")
        f.write(struct.pack("<II", 1, len(layer_shapes)))
        for taps, cin, cout in layer_shapes:
            f.write(struct.pack("<III", cin, cout, taps))
        f.write(struct.pack("<IIf", out_channels, in_features, voxel_size))
        for w, b in zip(weights, biases):
            f.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def read_checkpoint(path):
    """Returns (layer_shapes, weights, biases, out_channels, in_features, voxel_size)."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != b"SGNW":
            raise FormatError(f"bad magic {magic!r}, expected b'SGNW'")
        version, n_layers = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != 1:
            raise FormatError(f"unsupported SGNW version {version}")
        shapes = []
        for i in range(n_layers):
            cin, cout, taps = struct.unpack("<III", _read_exact(f, 12, f"layer {i} shape"))
            shapes.append((taps, cin, cout))
        out_channels, in_features, voxel_size = struct.unpack(
            "<IIf", _read_exact(f, 12, "tail descriptor"))
        weights, biases = [], []
        for i, (taps, cin, cout) in enumerate(shapes):
            w = np.frombuffer(
                _read_exact(f, taps * cin * cout * 4, f"layer {i} weights"), dtype="<f4")
            b = np.frombuffer(_read_exact(f, cout * 4, f"layer {i} biases"), dtype="<f4")
            weights.append(w.reshape(taps, cin, cout).copy())
            biases.append(b.copy())
    return shapes, weights, biases, out_channels, in_features, float(voxel_size)


# ---------------------------------------------------------------------------
# Label images and mask sets


def write_label_png(path, labels: np.ndarray) -> None:
    """Labels >= -1 as 16-bit grayscale PNG; -1 (unknown) stores as 0."""
    lab = np.asarray(labels)
    if lab.min() < -1 or lab.max() > 65534:
        raise ContractError("labels out of range for 16-bit PNG encoding")
    img = (lab.astype(np.int32) + 1).astype(np.uint16)
    Image.fromarray(img).save(path)


def read_label_png(path) -> np.ndarray:
    """Inverse of write_label_png: returns int32 labels with -1 = unknown."""
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise FormatError(f"{path}: expected an integer grayscale PNG, got {arr.dtype}")
    return arr.astype(np.int32) - 1


def write_mask_set(path_json, masks, out_dir=None) -> None:
    """Write masks as label/bitmap PNGs plus a JSON index.

    ``masks`` is a list of dicts with keys id, mask (HxW bool), and optional
    embedding. Non-overlapping sets collapse to one label PNG; overlapping
    sets write one bitmap PNG per mask.
    """
    path_json = Path(path_json)
    out_dir = Path(out_dir) if out_dir is not None else path_json.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    if not masks:
        path_json.write_text(json.dumps({"layers": [], "masks": []}))
        return
    h, w = masks[0]["mask"].shape
    total = np.zeros((h, w), dtype=np.int64)
    for m in masks:
        total += m["mask"].astype(np.int64)
    overlapping = bool((total > 1).any())

    entries = []
    stem = path_json.stem
    if overlapping:
        for m in masks:
            png = f"{stem}_mask_{m['id']}.png"
            Image.fromarray(m["mask"].astype(np.uint16)).save(out_dir / png)
            entries.append(_mask_entry(m, png))
        doc = {"layers": [e["png"] for e in entries], "masks": entries}
    else:
        label = np.zeros((h, w), dtype=np.uint16)
        for m in masks:
            label[m["mask"]] = m["id"]
        png = f"{stem}_labels.png"
        Image.fromarray(label).save(out_dir / png)
        doc = {"label_image": png, "masks": [_mask_entry(m, None) for m in masks]}
    path_json.write_text(json.dumps(doc))


def _mask_entry(m, png):
    mask = m["mask"]
    ys, xs = np.nonzero(mask)
    entry = {
        "id": int(m["id"]),
        "area": int(mask.sum()),
        "bbox": [int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())] if xs.size else [0, 0, 0, 0],
    }
    if png is not None:
        entry["png"] = png
    if m.get("embedding") is not None:
        entry["embedding"] = [float(v) for v in np.asarray(m["embedding"]).reshape(-1)]
    return entry


def read_mask_set(path_json):
    """Read a mask-set JSON plus its PNGs; returns a list of mask dicts."""
    path_json = Path(path_json)
    try:
        doc = json.loads(path_json.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path_json} is not valid JSON: {e}") from e
    base = path_json.parent
    masks = []
    if "label_image" in doc:
        label = np.asarray(Image.open(base / doc["label_image"])).astype(np.int64)
        for entry in doc["masks"]:
            mask = label == entry["id"]
            masks.append(_load_mask_entry(entry, mask))
    else:
        for entry in doc["masks"]:
            if "png" not in entry:
                raise FormatError(f"mask {entry.get('id')}: overlapping set entry lacks 'png'")
            mask = np.asarray(Image.open(base / entry["png"])) != 0
            masks.append(_load_mask_entry(entry, mask))
    ids = [m["id"] for m in masks]
    if len(set(ids)) != len(ids):
        raise FormatError("mask ids are not unique")
    return masks


def _load_mask_entry(entry, mask):
    area = int(mask.sum())
    if "area" in entry and int(entry["area"]) != area:
        raise DataError(
            f"mask {entry['id']}: declared area {entry['area']} != pixel count {area}")
    emb = entry.get("embedding")
    return {
        "id": int(entry["id"]),
        "mask": mask,
        "area": area,
        "bbox": entry.get("bbox"),
        "embedding": None if emb is None else np.asarray(emb, dtype=np.float32),
    }


# ---------------------------------------------------------------------------
# Validation entry point used by the CLI


def validate_file(path) -> dict:
    """Detect a file's container kind and fully parse it.

    Raises FormatError/DataError on problems (truncation errors name the
    missing bytes); returns a summary dict on success.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    with open(path, "rb") as f:
        head = f.read(4)
    if head == b"SGFM":
        data, assigned = read_feature_map(path)
        return {"kind": "feature_map", "height": data.shape[0], "width": data.shape[1],
                "channels": data.shape[2], "has_assigned_mask": assigned is not None}
    if head == b"SGSF":
        emb, counts, normalized = read_semantic_field(path)
        if (counts == 0).any() and emb[counts == 0].any():
            raise DataError(f"{path}: unobserved rows are not zero")
        return {"kind": "semantic_field", "points": emb.shape[0],
                "channels": emb.shape[1], "normalized": normalized}
    if head == b"SGTE":
        labels, emb = read_text_queries(path)
        norms = np.linalg.norm(emb.astype(np.float64), axis=1)
        if emb.size and np.abs(norms - 1.0).max() > UNIT_ROW_TOL_TEXT:
            raise DataError(f"{path}: query rows are not unit-norm within 1e-5")
        return {"kind": "text_queries", "count": len(labels), "channels": emb.shape[1]}
    if head == b"SGNW":
        shapes, weights, biases, out_c, in_f, vs = read_checkpoint(path)
        for i, w in enumerate(weights):
            if not np.isfinite(w).all():
                raise DataError(f"{path}: layer {i} has non-finite weights")
        return {"kind": "network", "layers": len(shapes), "out_channels": out_c,
                "in_features": in_f, "voxel_size": vs}
    raise FormatError(f"{path}: unknown magic {head!r}")
