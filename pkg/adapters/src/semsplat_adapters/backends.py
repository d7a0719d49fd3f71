"""Encoder backends.

Two families:

* ``colorstats`` — a dependency-free, deterministic encoder for pipeline
  testing. Pixel embeddings come from local color statistics pushed through a
  fixed random projection; the matching text encoder embeds color words by
  encoding a solid patch of that color through the same path, so image and
  text embeddings share a space.
* ``clip`` — wraps a Hugging Face CLIP checkpoint when torch/transformers are
  installed. Loading failures surface as AdapterError naming the model.
"""

from __future__ import annotations

import numpy as np

from .errors import AdapterError

COLOR_WORDS = {
    "red": (0.90, 0.10, 0.10),
    "green": (0.10, 0.80, 0.15),
    "blue": (0.15, 0.20, 0.90),
    "yellow": (0.92, 0.90, 0.10),
    "cyan": (0.10, 0.85, 0.85),
    "magenta": (0.88, 0.12, 0.85),
    "orange": (0.95, 0.55, 0.10),
    "purple": (0.55, 0.15, 0.80),
    "white": (0.95, 0.95, 0.95),
    "gray": (0.50, 0.50, 0.50),
    "black": (0.05, 0.05, 0.05),
}


class ColorStatsEncoder:
    """Local color statistics -> fixed random projection -> unit embeddings."""

    name = "colorstats"

    def __init__(self, channels: int = 16, window: int = 5, seed: int = 0):
        self.channels = channels
        self.window = window
        rng = np.random.default_rng(seed)
        # 9 raw stats: local mean rgb, local std rgb, centered rgb
        self._proj = rng.standard_normal((9, channels)) / np.sqrt(9)

    def _box_filter(self, img: np.ndarray) -> np.ndarray:
        r = self.window // 2
        padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")
        csum = np.cumsum(np.cumsum(padded, axis=0), axis=1)
        csum = np.pad(csum, ((1, 0), (1, 0), (0, 0)))
        h, w = img.shape[:2]
        k = self.window
        total = (csum[k:k + h, k:k + w] - csum[:h, k:k + w]
                 - csum[k:k + h, :w] + csum[:h, :w])
        return total / (k * k)

    def encode_image(self, rgb: np.ndarray) -> np.ndarray:
        """HxWx3 floats in [0,1] -> HxWxC unit-norm features."""
        rgb = np.asarray(rgb, dtype=np.float64)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise AdapterError(f"expected an HxWx3 image, got shape {rgb.shape}")
        mean = self._box_filter(rgb)
        sq_mean = self._box_filter(rgb * rgb)
        std = np.sqrt(np.maximum(sq_mean - mean * mean, 0.0))
        centered = rgb - 0.5
        stats = np.concatenate([mean, std, centered], axis=2)
        feats = stats @ self._proj
        norms = np.linalg.norm(feats, axis=2, keepdims=True)
        return (feats / np.maximum(norms, 1e-8)).astype(np.float32)

    def encode_patch(self, rgb: np.ndarray) -> np.ndarray:
        """Pooled unit embedding of a whole image or crop."""
        feats = self.encode_image(rgb).astype(np.float64)
        pooled = feats.reshape(-1, self.channels).mean(axis=0)
        n = np.linalg.norm(pooled)
        if n < 1e-8:
            raise AdapterError("degenerate patch produced a zero embedding")
        return (pooled / n).astype(np.float32)

    def encode_labels(self, labels) -> np.ndarray:
        """Color words -> embeddings of solid patches of that color."""
        rows = []
        for label in labels:
            key = label.strip().lower()
            if key not in COLOR_WORDS:
                raise AdapterError(
                    f"colorstats text encoder only knows color words "
                    f"({', '.join(sorted(COLOR_WORDS))}), not {label!r}")
            patch = np.tile(np.array(COLOR_WORDS[key]), (16, 16, 1))
            rows.append(self.encode_patch(patch))
        return np.stack(rows)


class ClipEncoder:
    """Hugging Face CLIP wrapper; requires the optional torch/transformers stack."""

    name = "clip"

    def __init__(self, model_name: str = "openai/clip-vit-base-patch32"):
        self.model_name = model_name
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as e:
            raise AdapterError(
                f"cannot load {model_name}: torch/transformers not installed ({e})"
            ) from e
        try:
            self._model = CLIPModel.from_pretrained(model_name)
            self._processor = CLIPProcessor.from_pretrained(model_name)
        except Exception as e:
            raise AdapterError(f"cannot load {model_name}: {e}") from e
        self.channels = int(self._model.config.projection_dim)

    def encode_patch(self, rgb: np.ndarray) -> np.ndarray:
        import torch
        image = (np.clip(rgb, 0, 1) * 255).astype(np.uint8)
        inputs = self._processor(images=image, return_tensors="pt")
        with torch.no_grad():
            out = self._model.get_image_features(**inputs)[0].numpy()
        return (out / np.linalg.norm(out)).astype(np.float32)

    def encode_image(self, rgb: np.ndarray) -> np.ndarray:
        raise AdapterError(
            f"{self.model_name} is an image-level model; use --level image")

    def encode_labels(self, labels) -> np.ndarray:
        import torch
        inputs = self._processor(text=list(labels), return_tensors="pt", padding=True)
        with torch.no_grad():
            out = self._model.get_text_features(**inputs).numpy()
        return (out / np.linalg.norm(out, axis=1, keepdims=True)).astype(np.float32)


def make_backend(name: str, channels: int = 16, seed: int = 0):
    if name == "colorstats":
        return ColorStatsEncoder(channels=channels, seed=seed)
    if name == "clip" or name.startswith(("openai/", "laion/")):
        return ClipEncoder(model_name="openai/clip-vit-base-patch32"
                           if name == "clip" else name)
    raise AdapterError(f"unknown backend {name!r} (try 'colorstats' or 'clip')")
