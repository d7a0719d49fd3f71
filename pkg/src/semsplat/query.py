"""Open-vocabulary queries against semantic fields.

Scores are plain cosine similarities between L2-normalized field rows and
unit text embeddings; when both a projected and a predicted field exist, the
per-class maximum of the two scores is used. Softmax over scores / tau turns
them into per-class confidences, which render through the same splatting path
as color. Unobserved Gaussians are never scored; during confidence splatting
they carry all-zero rows so geometry still occludes correctly.

Tie-breaks are fixed: argmax prefers the lowest class index, localization
peaks prefer the first pixel in scan order. The unknown label is -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError
from .formats import read_text_queries, write_text_queries
from .render import RenderedImage, class_labels, render_confidence
from .scene import SH_C0, Camera, GaussianScene, SemanticField

UNKNOWN = -1
TAU_DEFAULT = 0.05
NORM_FLOOR = 1e-8


@dataclass(frozen=True)
class TextQuerySet:
    """Open-vocabulary labels with unit-norm embedding rows."""

    labels: list
    embeddings: np.ndarray  # (K, C) float32, rows unit within 1e-5

    def __post_init__(self):
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        if emb.ndim != 2 or emb.shape[0] != len(self.labels) or emb.shape[0] < 1:
            raise ContractError(
                f"queries need K>=1 embedding rows matching labels, got {emb.shape}")
        norms = np.linalg.norm(emb.astype(np.float64), axis=1)
        if np.abs(norms - 1.0).max() > 1e-5:
            raise DataError("query embedding rows must be unit length within 1e-5")
        object.__setattr__(self, "embeddings", emb)

    @property
    def num_queries(self) -> int:
        return self.embeddings.shape[0]

    @property
    def channels(self) -> int:
        return self.embeddings.shape[1]

    def save(self, path) -> None:
        write_text_queries(path, list(self.labels), self.embeddings)

    @classmethod
    def load(cls, path) -> "TextQuerySet":
        labels, emb = read_text_queries(path)
        return cls(labels=labels, embeddings=emb)


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-Gaussian, per-class cosine similarities with an observation mask."""

    scores: np.ndarray    # (N, K) float64; unobserved rows are zero and masked
    observed: np.ndarray  # (N,) bool


def score(fld: SemanticField, queries: TextQuerySet) -> ScoreMatrix:
    """Cosine similarity of every observed field row against every query."""
    if fld.channels != queries.channels:
        raise ContractError(
            f"field has {fld.channels} channels, queries have {queries.channels}")
    emb = fld.embeddings.astype(np.float64)
    norms = np.maximum(np.linalg.norm(emb, axis=1, keepdims=True), NORM_FLOOR)
    cos = (emb / norms) @ queries.embeddings.astype(np.float64).T
    obs = fld.observed.copy()
    cos[~obs] = 0.0
    return ScoreMatrix(scores=cos, observed=obs)


def ensemble(s2d: ScoreMatrix, s3d: ScoreMatrix) -> ScoreMatrix:
    """Elementwise maximum where both fields observed a Gaussian; pass-through
    where only one did; masked where neither."""
    if s2d.scores.shape != s3d.scores.shape:
        raise ContractError(
            f"score shapes differ: {s2d.scores.shape} vs {s3d.scores.shape}")
    both = s2d.observed & s3d.observed
    out = np.zeros_like(s2d.scores)
    out[both] = np.maximum(s2d.scores[both], s3d.scores[both])
    only2 = s2d.observed & ~s3d.observed
    only3 = s3d.observed & ~s2d.observed
    out[only2] = s2d.scores[only2]
    out[only3] = s3d.scores[only3]
    return ScoreMatrix(scores=out, observed=s2d.observed | s3d.observed)


def classify(scores: ScoreMatrix, temperature: float = TAU_DEFAULT):
    """Softmax confidences and argmax labels per observed Gaussian.

    Returns (labels (N,) int32 with -1 for unobserved, confidences (N,K)).
    """
    if temperature <= 0:
        raise ContractError(f"temperature must be positive, got {temperature}")
    n, _ = scores.scores.shape
    conf = np.zeros_like(scores.scores)
    labels = np.full(n, UNKNOWN, dtype=np.int32)
    obs = scores.observed
    if obs.any():
        s = scores.scores[obs] / temperature
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        conf[obs] = e / e.sum(axis=1, keepdims=True)
        labels[obs] = scores.scores[obs].argmax(axis=1)
    return labels, conf


def _combined_scores(scene: GaussianScene, queries: TextQuerySet,
                     use2d: bool, use3d: bool) -> ScoreMatrix:
    fields = []
    if use2d and scene.semantic2d is not None:
        fields.append(score(scene.semantic2d, queries))
    if use3d and scene.semantic3d is not None:
        fields.append(score(scene.semantic3d, queries))
    if not fields:
        raise ContractError("scene has no attached semantic field to query")
    return fields[0] if len(fields) == 1 else ensemble(fields[0], fields[1])


def segment_view(scene: GaussianScene, cam: Camera, queries: TextQuerySet,
                 use2d: bool = True, use3d: bool = True,
                 temperature: float = TAU_DEFAULT, min_alpha: float = 0.5,
                 workers: int = 1):
    """Render a per-pixel class map for one view.

    Returns (labels (H,W) int32 with -1 where coverage < min_alpha,
    confidence RenderedImage).
    """
    scores = _combined_scores(scene, queries, use2d, use3d)
    _, conf = classify(scores, temperature)
    img = render_confidence(scene, cam, conf, workers=workers)
    return class_labels(img, min_alpha=min_alpha), img


def localize(scene: GaussianScene, cam: Camera, query_embedding: np.ndarray,
             use2d: bool = True, use3d: bool = True, workers: int = 1):
    """Find a single query in one view.

    The per-Gaussian scores are min-max normalized over observed Gaussians and
    splatted as a one-channel relevancy image. Returns (peak pixel (x, y),
    3-D position of the best Gaussian, relevancy RenderedImage).
    """
    q = np.asarray(query_embedding, dtype=np.float32).reshape(-1)
    qn = np.linalg.norm(q.astype(np.float64))
    if qn < NORM_FLOOR:
        raise ContractError("query embedding must be nonzero")
    queries = TextQuerySet(labels=["query"], embeddings=(q / qn)[None].astype(np.float32))
    scores = _combined_scores(scene, queries, use2d, use3d)
    obs = scores.observed
    if not obs.any():
        raise ContractError("no observed Gaussians to localize against")
    vals = scores.scores[:, 0]
    lo, hi = vals[obs].min(), vals[obs].max()
    rel = np.zeros(len(scene), dtype=np.float64)
    rel[obs] = 1.0 if hi == lo else (vals[obs] - lo) / (hi - lo)
    img = render_confidence(scene, cam, rel[:, None], workers=workers)
    flat = int(img.channels[:, :, 0].argmax())
    py, px = divmod(flat, cam.width)
    best = int(np.argmax(np.where(obs, vals, -np.inf)))
    return (px, py), scene.positions[best].astype(np.float64).copy(), img


def select(fld: SemanticField, query_embedding: np.ndarray, threshold: float) -> np.ndarray:
    """Indices of observed Gaussians whose cosine to the query reaches the threshold."""
    if not -1.0 < threshold < 1.0:
        raise ContractError(f"threshold must lie in (-1, 1), got {threshold}")
    q = np.asarray(query_embedding, dtype=np.float64).reshape(-1)
    qn = np.linalg.norm(q)
    if qn < NORM_FLOOR:
        raise ContractError("query embedding must be nonzero")
    queries = TextQuerySet(labels=["query"],
                           embeddings=(q / qn)[None].astype(np.float32))
    sm = score(fld, queries)
    return np.where(sm.observed & (sm.scores[:, 0] >= threshold))[0]


def edit(scene: GaussianScene, selection: np.ndarray, op: str,
         delta: np.ndarray | None = None, rgb: np.ndarray | None = None) -> GaussianScene:
    """Apply a language-selected edit; returns a new scene.

    op == "remove"     drop the selected Gaussians and their field rows.
    op == "translate"  shift selected positions by ``delta``.
    op == "recolor"    set the degree-0 color of the selection to ``rgb`` and
                       zero its higher-order terms.
    """
    sel = np.asarray(selection, dtype=np.int64).reshape(-1)
    n = len(scene)
    if sel.size and (sel.min() < 0 or sel.max() >= n):
        raise ContractError(f"selection index out of range for {n} gaussians")

    if op == "remove":
        keep = np.ones(n, dtype=bool)
        keep[sel] = False
        return GaussianScene(
            scene.positions[keep], scene.rotations[keep], scene.scales[keep],
            scene.opacities[keep], scene.sh[keep],
            semantic2d=_take_field(scene.semantic2d, keep),
            semantic3d=_take_field(scene.semantic3d, keep),
        )
    if op == "translate":
        if delta is None:
            raise ContractError("translate needs a delta vector")
        d = np.asarray(delta, dtype=np.float32).reshape(3)
        positions = scene.positions.copy()
        positions[sel] += d
        return GaussianScene(positions, scene.rotations, scene.scales,
                             scene.opacities, scene.sh,
                             semantic2d=scene.semantic2d, semantic3d=scene.semantic3d)
    if op == "recolor":
        if rgb is None:
            raise ContractError("recolor needs an rgb triple")
        color = np.asarray(rgb, dtype=np.float64).reshape(3)
        sh = scene.sh.copy()
        sh[sel, :, 0] = ((color - 0.5) / SH_C0).astype(np.float32)
        sh[sel, :, 1:] = 0.0
        return GaussianScene(scene.positions, scene.rotations, scene.scales,
                             scene.opacities, sh,
                             semantic2d=scene.semantic2d, semantic3d=scene.semantic3d)
    raise ContractError(f"unknown edit op {op!r}")


def _take_field(fld: SemanticField | None, keep: np.ndarray) -> SemanticField | None:
    if fld is None:
        return None
    return SemanticField(embeddings=fld.embeddings[keep],
                         counts=fld.counts[keep], normalized=fld.normalized)
