"""Open-vocabulary semantic fields for 3D Gaussian-splat scenes.

The toolkit projects multi-view 2D feature maps onto Gaussians, optionally
predicts per-Gaussian embeddings with a sparse 3D conv net, and answers text
queries (segmentation, localization, selection, editing) by cosine similarity
and confidence splatting.
"""

from .errors import ContractError, DataError, FormatError, IOFailure, SemsplatError
from .maskunify import FeatureMap, Mask, MaskSet, one_hot_ids, unify
from .projection import (FusionAccumulator, ViewMatch, accumulate, finalize,
                         match_visible, project_scene)
from .query import (ScoreMatrix, TextQuerySet, classify, edit, ensemble, localize,
                    score, segment_view, select)
from .render import (DepthMap, RenderedImage, Splat2D, class_labels, eval_sh,
                     project_gaussian, render_confidence, render_depth, render_rgb)
from .scene import (Camera, Gaussian, GaussianScene, SemanticField, covariance,
                    load_cameras, load_ply, save_cameras, save_scene)
from .sparsenet import (SparseConvNet, SparseGrid, TrainConfig, cosine_loss,
                        predict_field, train, voxelize)
from .synthetic import (SegMetrics, SyntheticSpec, SynthScene, loc_accuracy, miou,
                        prototype_embeddings, synth_features, synth_scene)

__version__ = "0.1.0"

__all__ = [
    "Camera", "ContractError", "DataError", "DepthMap", "FeatureMap",
    "FormatError", "FusionAccumulator", "Gaussian", "GaussianScene", "IOFailure",
    "Mask", "MaskSet", "RenderedImage", "ScoreMatrix", "SegMetrics",
    "SemanticField", "SemsplatError", "SparseConvNet", "SparseGrid", "Splat2D",
    "SyntheticSpec", "SynthScene", "TextQuerySet", "TrainConfig", "ViewMatch",
    "accumulate", "class_labels", "classify", "cosine_loss", "covariance", "edit",
    "ensemble", "eval_sh", "finalize", "loc_accuracy", "load_cameras", "load_ply",
    "localize", "match_visible", "miou", "one_hot_ids", "predict_field",
    "project_gaussian", "project_scene", "prototype_embeddings",
    "render_confidence", "render_depth", "render_rgb", "save_cameras",
    "save_scene", "score", "segment_view", "select", "synth_features",
    "synth_scene", "train", "unify", "voxelize",
]
