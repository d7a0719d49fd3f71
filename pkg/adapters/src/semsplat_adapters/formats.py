"""Writers for the toolkit's container formats.

These re-implement the binary layouts rather than importing the main package:
the file formats are the only contract between the adapters and the toolkit.
All writes are atomic (write to a temp file, then rename).
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
from PIL import Image

ALIGN = 8


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _pad(buf: bytearray) -> None:
    rem = len(buf) % ALIGN
    if rem:
        buf.extend(b"\x00" * (ALIGN - rem))


def write_feature_map(path, data: np.ndarray, assigned: np.ndarray | None = None,
                      half: bool = False) -> None:
    """SGFM: magic, u32 version/H/W/C, u8 dtype, u8 mask flag, pad8, values, mask."""
    data = np.ascontiguousarray(data, dtype="<f2" if half else "<f4")
    h, w, c = data.shape
    buf = bytearray()
    buf += b"SGFM"
    buf += struct.pack("<IIII", 1, h, w, c)
    buf += struct.pack("<BB", 1 if half else 0, 0 if assigned is None else 1)
    _pad(buf)
    buf += data.tobytes()
    if assigned is not None:
        buf += np.ascontiguousarray(assigned, dtype=np.uint8).tobytes()
    _atomic_write(path, bytes(buf))


def write_text_queries(path, labels, embeddings: np.ndarray) -> None:
    """SGTE: magic, u32 K, u32 C, K nul-terminated UTF-8 labels, K x C f32."""
    emb = np.ascontiguousarray(embeddings, dtype="<f4")
    buf = bytearray()
    buf += b"SGTE"
    buf += struct.pack("<II", emb.shape[0], emb.shape[1])
    for label in labels:
        buf += label.encode("utf-8") + b"\x00"
    buf += emb.tobytes()
    _atomic_write(path, bytes(buf))


def write_id_png(path, ids: np.ndarray) -> None:
    """Instance ids as a 16-bit grayscale PNG; 0 means background."""
    ids = np.asarray(ids)
    if ids.min() < 0 or ids.max() > 65535:
        raise ValueError("ids out of uint16 range")
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    Image.fromarray(ids.astype(np.uint16)).save(tmp, format="PNG")
    os.replace(tmp, path)


def write_mask_set(path_json, masks) -> None:
    """Mask set: 16-bit label PNG (or one PNG per mask when overlapping) plus
    a JSON index [{id, area, bbox, embedding?, png?}]."""
    path_json = Path(path_json)
    out_dir = path_json.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    if not masks:
        _atomic_write(path_json, json.dumps({"layers": [], "masks": []}).encode())
        return
    h, w = masks[0]["mask"].shape
    coverage = np.zeros((h, w), dtype=np.int64)
    for m in masks:
        coverage += m["mask"].astype(np.int64)
    stem = path_json.stem
    entries = []
    if (coverage > 1).any():
        for m in masks:
            png = f"{stem}_mask_{m['id']}.png"
            write_id_png(out_dir / png, m["mask"].astype(np.uint16))
            entries.append(_entry(m, png))
        doc = {"layers": [e["png"] for e in entries], "masks": entries}
    else:
        label = np.zeros((h, w), dtype=np.uint16)
        for m in masks:
            label[m["mask"]] = m["id"]
        png = f"{stem}_labels.png"
        write_id_png(out_dir / png, label)
        doc = {"label_image": png, "masks": [_entry(m, None) for m in masks]}
    _atomic_write(path_json, json.dumps(doc).encode())


def _entry(m, png):
    mask = m["mask"]
    ys, xs = np.nonzero(mask)
    entry = {
        "id": int(m["id"]),
        "area": int(mask.sum()),
        "bbox": [int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())]
        if xs.size else [0, 0, 0, 0],
    }
    if png is not None:
        entry["png"] = png
    if m.get("embedding") is not None:
        entry["embedding"] = [float(v) for v in np.asarray(m["embedding"]).reshape(-1)]
    return entry
