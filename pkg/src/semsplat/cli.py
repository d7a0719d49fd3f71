"""Command-line entry point.

One binary, many subcommands; every run logs its fully resolved configuration
(as JSON with --log-json). Exit codes: 0 success, 1 contract/data/file error,
2 usage error. All randomness flows from explicit --seed flags.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import formats, maskunify, projection, query as query_mod, render, sparsenet, synthetic
from .errors import ContractError, FormatError, SemsplatError
from .maskunify import FeatureMap, MaskSet
from .query import TextQuerySet
from .scene import GaussianScene, SemanticField, load_cameras, load_ply, save_cameras, save_scene
from .sparsenet import SparseConvNet, TrainConfig

logger = logging.getLogger("semsplat")


class LoggedCommand(click.Command):
    """Logs the resolved config and maps toolkit errors to exit code 1."""

    def invoke(self, ctx):
        root = ctx.find_root()
        as_json = root.params.get("log_json", False)
        params = {k: _jsonable(v) for k, v in ctx.params.items()}
        if as_json:
            logger.info(json.dumps({"command": self.name, "config": params}))
        else:
            logger.info("%s config: %s", self.name, params)
        try:
            return super().invoke(ctx)
        except SemsplatError as e:
            raise click.ClickException(str(e)) from e
        except OSError as e:
            raise click.ClickException(str(e)) from e


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, tuple):
        return list(v)
    return v


@click.group()
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.option("--log-json", is_flag=True, help="Emit machine-readable JSON log lines.")
def cli(log_level, log_json):
    """Semantic fields for Gaussian-splat scenes: render, project, train, query."""
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(
        "%(message)s" if log_json else "%(levelname)s %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(getattr(logging, log_level.upper()))


def _cmd(name):
    return dict(cls=LoggedCommand, name=name)


def _parse_triple(text, what):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise ContractError(f"{what} must be three comma-separated numbers, got {text!r}")
    if len(vals) != 3:
        raise ContractError(f"{what} must have exactly three components, got {text!r}")
    return np.array(vals)


def _write_rgb_png(img: render.RenderedImage, path):
    arr = np.clip(np.round(img.channels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def _load_scene_with_fields(scene_path, field2d, field3d):
    scene = load_ply(scene_path)
    if field2d is not None:
        emb, counts, normalized = formats.read_semantic_field(field2d)
        scene = scene.with_fields(semantic2d=SemanticField(emb, counts, normalized))
    if field3d is not None:
        emb, counts, normalized = formats.read_semantic_field(field3d)
        scene = scene.with_fields(semantic3d=SemanticField(emb, counts, normalized))
    return scene


def _view_camera(camera_path, view_index):
    cams = load_cameras(camera_path)
    if not 0 <= view_index < len(cams):
        raise ContractError(f"view index {view_index} out of range for {len(cams)} cameras")
    return cams[view_index]


def _feature_map_path(directory: Path, index: int) -> Path:
    for name in (f"{index:04d}.sgfm", f"{index}.sgfm"):
        p = directory / name
        if p.exists():
            return p
    raise FormatError(f"no feature map for view {index} under {directory} "
                      f"(expected {index:04d}.sgfm)")


# ---------------------------------------------------------------------------


@cli.command(**_cmd("render"))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--camera", "camera_path", required=True, type=click.Path(exists=True))
@click.option("--view", "view_index", default=0, show_default=True, type=int)
@click.option("--background", default="0,0,0", show_default=True)
@click.option("--alpha-d", default=0.5, show_default=True, type=float,
              help="Opacity threshold for --depth-out.")
@click.option("--depth-out", type=click.Path(),
              help="Also write the opacity-threshold depth map as a C=1 SGFM "
                   "with validity as the assignment mask.")
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def render_cmd(scene_path, camera_path, view_index, background, alpha_d, depth_out,
               workers, out_path):
    """Render an RGB view to PNG (optionally with a depth SGFM)."""
    scene = load_ply(scene_path)
    cam = _view_camera(camera_path, view_index)
    bg = _parse_triple(background, "--background")
    img = render.render_rgb(scene, cam, background=bg, workers=workers)
    _write_rgb_png(img, out_path)
    if depth_out:
        dm = render.render_depth(scene, cam, alpha_d=alpha_d, workers=workers)
        data = np.where(dm.valid, dm.depth, 0.0).astype(np.float32)[:, :, None]
        formats.write_feature_map(depth_out, data, dm.valid.astype(np.uint8))
    click.echo(f"wrote {out_path}")


@cli.command(**_cmd("project"))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--camera", "camera_path", required=True, type=click.Path(exists=True))
@click.option("--features", "features_dir", required=True, type=click.Path(exists=True))
@click.option("--alpha-d", default=0.5, show_default=True, type=float)
@click.option("--tol-rel", default=projection.TOL_REL_DEFAULT, show_default=True, type=float)
@click.option("--tol-abs", default=projection.TOL_ABS_DEFAULT, show_default=True, type=float)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def project_cmd(scene_path, camera_path, features_dir, alpha_d, tol_rel, tol_abs,
                workers, out_path):
    """Fuse per-view feature maps into a per-Gaussian semantic field."""
    scene = load_ply(scene_path)
    cams = load_cameras(camera_path)
    features_dir = Path(features_dir)
    views = [(cam, FeatureMap.load(_feature_map_path(features_dir, i)))
             for i, cam in enumerate(cams)]
    fld = projection.project_scene(scene, views, alpha_d=alpha_d,
                                   tol_rel=tol_rel, tol_abs=tol_abs, workers=workers)
    formats.write_semantic_field(out_path, fld.embeddings, fld.counts, fld.normalized)
    click.echo(f"wrote {out_path} ({int(fld.observed.sum())}/{fld.num_points} observed)")


@cli.command(**_cmd("unify"))
@click.option("--mode", required=True,
              type=click.Choice(["pixel", "instance", "image", "onehot"]))
@click.option("--features", "features_path", type=click.Path(exists=True),
              help="Source SGFM (pixel mode).")
@click.option("--masks", "masks_path", type=click.Path(exists=True),
              help="Mask-set JSON (pixel/instance/image modes).")
@click.option("--ids", "ids_path", type=click.Path(exists=True),
              help="16-bit instance-id PNG (onehot mode).")
@click.option("--num-ids", type=int, help="Id count K for onehot mode.")
@click.option("--out", "out_path", required=True, type=click.Path())
def unify_cmd(mode, features_path, masks_path, ids_path, num_ids, out_path):
    """Convert model outputs plus masks into a uniform per-pixel feature map."""
    if mode == "onehot":
        if ids_path is None or num_ids is None:
            raise ContractError("onehot mode needs --ids and --num-ids")
        ids = np.asarray(Image.open(ids_path)).astype(np.int64)
        fmap = maskunify.one_hot_ids(ids, num_ids)
    else:
        if masks_path is None:
            raise ContractError(f"{mode} mode needs --masks")
        masks = MaskSet.from_records(formats.read_mask_set(masks_path))
        source = None
        if mode == "pixel":
            if features_path is None:
                raise ContractError("pixel mode needs --features")
            source = FeatureMap.load(features_path)
        fmap = maskunify.unify(source, masks, mode)
    fmap.save(out_path)
    click.echo(f"wrote {out_path}")


@cli.command(**_cmd("train-net"))
@click.option("--scene", "scene_paths", required=True, multiple=True,
              type=click.Path(exists=True))
@click.option("--field", "field_paths", required=True, multiple=True,
              type=click.Path(exists=True))
@click.option("--epochs", default=100, show_default=True, type=int)
@click.option("--lr", default=0.2, show_default=True, type=float)
@click.option("--momentum", default=0.9, show_default=True, type=float)
@click.option("--voxel-size", default=sparsenet.VOXEL_SIZE_DEFAULT, show_default=True,
              type=float)
@click.option("--hidden", default="32,64,64", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--trace", "trace_path", type=click.Path())
def train_net_cmd(scene_paths, field_paths, epochs, lr, momentum, voxel_size,
                  hidden, seed, out_path, trace_path):
    """Train the sparse conv net on (scene, projected field) pairs."""
    if len(scene_paths) != len(field_paths):
        raise ContractError("--scene and --field must be given the same number of times")
    dataset = []
    for sp, fp in zip(scene_paths, field_paths):
        emb, counts, normalized = formats.read_semantic_field(fp)
        dataset.append((load_ply(sp), SemanticField(emb, counts, normalized)))
    channels = dataset[0][1].channels
    widths = tuple(int(x) for x in hidden.split(","))
    net = SparseConvNet(out_channels=channels, hidden=widths,
                        voxel_size=voxel_size, seed=seed)
    cfg = TrainConfig(epochs=epochs, lr=lr, momentum=momentum,
                      voxel_size=voxel_size, seed=seed)
    net, trace = sparsenet.train(net, dataset, cfg)
    net.save(out_path)
    if trace_path:
        lines = ["epoch,loss"] + [f"{i},{v:.10f}" for i, v in enumerate(trace)]
        Path(trace_path).write_text("\n".join(lines) + "\n")
    click.echo(f"wrote {out_path} (final loss {trace[-1]:.6f})")


@cli.command(**_cmd("predict-net"))
@click.option("--net", "net_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--voxel-size", type=float, help="Override the checkpoint voxel size.")
@click.option("--out", "out_path", required=True, type=click.Path())
def predict_net_cmd(net_path, scene_path, voxel_size, out_path):
    """Predict a per-Gaussian semantic field from raw Gaussian attributes."""
    net = SparseConvNet.load(net_path)
    scene = load_ply(scene_path)
    fld = sparsenet.predict_field(net, scene, voxel_size)
    formats.write_semantic_field(out_path, fld.embeddings, fld.counts, fld.normalized)
    click.echo(f"wrote {out_path}")


@cli.command(**_cmd("query"))
@click.option("--scene", "scene_path", type=click.Path(exists=True))
@click.option("--field2d", type=click.Path(exists=True))
@click.option("--field3d", type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--temperature", default=query_mod.TAU_DEFAULT, show_default=True, type=float)
@click.option("--out", "out_path", type=click.Path())
def query_cmd(scene_path, field2d, field3d, queries_path, temperature, out_path):
    """Classify every Gaussian against a text query set."""
    if scene_path is None and field2d is None and field3d is None:
        raise ContractError("query needs --scene or an explicit --field2d/--field3d")
    queries = TextQuerySet.load(queries_path)
    fields = []
    if scene_path is not None:
        scene = _load_scene_with_fields(scene_path, field2d, field3d)
        for fld in (scene.semantic2d, scene.semantic3d):
            if fld is not None:
                fields.append(query_mod.score(fld, queries))
    else:
        for path in (field2d, field3d):
            if path is not None:
                emb, counts, normalized = formats.read_semantic_field(path)
                fields.append(query_mod.score(SemanticField(emb, counts, normalized), queries))
    if not fields:
        raise ContractError("no semantic field available to query")
    scores = fields[0] if len(fields) == 1 else query_mod.ensemble(fields[0], fields[1])
    labels, conf = query_mod.classify(scores, temperature)
    hist = {name: int((labels == k).sum()) for k, name in enumerate(queries.labels)}
    hist["unknown"] = int((labels == query_mod.UNKNOWN).sum())
    result = {
        "class_names": list(queries.labels),
        "counts": hist,
        "labels": labels.tolist(),
        "max_confidence": [float(c) for c in conf.max(axis=1)],
    }
    text = json.dumps(result)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


@cli.command(**_cmd("segment"))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--field2d", type=click.Path(exists=True))
@click.option("--field3d", type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--camera", "camera_path", required=True, type=click.Path(exists=True))
@click.option("--view-index", default=0, show_default=True, type=int)
@click.option("--temperature", default=query_mod.TAU_DEFAULT, show_default=True, type=float)
@click.option("--alpha-d", "min_alpha", default=0.5, show_default=True, type=float,
              help="Coverage threshold: pixels under this accumulated opacity "
                   "are labeled unknown.")
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--confidence-out", type=click.Path())
def segment_cmd(scene_path, field2d, field3d, queries_path, camera_path, view_index,
                temperature, min_alpha, workers, out_path, confidence_out):
    """Render a semantic segmentation of one view (16-bit label PNG)."""
    scene = _load_scene_with_fields(scene_path, field2d, field3d)
    queries = TextQuerySet.load(queries_path)
    cam = _view_camera(camera_path, view_index)
    labels, img = query_mod.segment_view(scene, cam, queries, temperature=temperature,
                                         min_alpha=min_alpha, workers=workers)
    formats.write_label_png(out_path, labels)
    if confidence_out:
        formats.write_feature_map(confidence_out, img.channels.astype(np.float32))
    covered = int((labels != query_mod.UNKNOWN).sum())
    click.echo(f"wrote {out_path} ({covered} labeled pixels)")


@cli.command(**_cmd("localize"))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--field2d", type=click.Path(exists=True))
@click.option("--field3d", type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--query-label", help="Label to localize (default: the only query).")
@click.option("--camera", "camera_path", required=True, type=click.Path(exists=True))
@click.option("--view-index", default=0, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--out", "out_path", type=click.Path(), help="Relevancy SGFM output.")
def localize_cmd(scene_path, field2d, field3d, queries_path, query_label, camera_path,
                 view_index, workers, out_path):
    """Locate a single text query in a view; prints the result as JSON."""
    scene = _load_scene_with_fields(scene_path, field2d, field3d)
    queries = TextQuerySet.load(queries_path)
    if query_label is None:
        if queries.num_queries != 1:
            raise ContractError("--query-label is required when the set has several queries")
        row = 0
    else:
        if query_label not in queries.labels:
            raise ContractError(f"label {query_label!r} not in query set")
        row = queries.labels.index(query_label)
    cam = _view_camera(camera_path, view_index)
    pixel, point, img = query_mod.localize(scene, cam, queries.embeddings[row],
                                           workers=workers)
    if out_path:
        formats.write_feature_map(out_path, img.channels.astype(np.float32))
    click.echo(json.dumps({
        "pixel": [int(pixel[0]), int(pixel[1])],
        "point": [float(v) for v in point],
    }))


@cli.command(**_cmd("edit"))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--field2d", type=click.Path(exists=True))
@click.option("--field3d", type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True))
@click.option("--query-label", help="Label selecting the edit target.")
@click.option("--threshold", default=0.8, show_default=True, type=float)
@click.option("--op", required=True, type=click.Choice(["remove", "translate", "recolor"]))
@click.option("--delta", help="dx,dy,dz for translate.")
@click.option("--rgb", help="r,g,b in [0,1] for recolor.")
@click.option("--out", "out_path", required=True, type=click.Path())
def edit_cmd(scene_path, field2d, field3d, queries_path, query_label, threshold, op,
             delta, rgb, out_path):
    """Select Gaussians by language query and edit them."""
    scene = _load_scene_with_fields(scene_path, field2d, field3d)
    fld = scene.semantic2d if scene.semantic2d is not None else scene.semantic3d
    if fld is None:
        raise ContractError("edit needs a semantic field (--field2d/--field3d or sidecar)")
    queries = TextQuerySet.load(queries_path)
    if query_label is None:
        if queries.num_queries != 1:
            raise ContractError("--query-label is required when the set has several queries")
        row = 0
    else:
        if query_label not in queries.labels:
            raise ContractError(f"label {query_label!r} not in query set")
        row = queries.labels.index(query_label)
    selection = query_mod.select(fld, queries.embeddings[row], threshold)
    edited = query_mod.edit(
        scene, selection, op,
        delta=_parse_triple(delta, "--delta") if delta else None,
        rgb=_parse_triple(rgb, "--rgb") if rgb else None,
    )
    save_scene(edited, out_path)
    click.echo(f"wrote {out_path} ({selection.size} gaussians edited)")


@cli.command(**_cmd("synth-scene"))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--objects", default="3:8", show_default=True,
              help="min:max object count.")
@click.option("--gaussians-per-object", default=150, show_default=True, type=int)
@click.option("--cameras", "num_cameras", default=20, show_default=True, type=int)
@click.option("--image-size", default=64, show_default=True, type=int)
@click.option("--channels", default=16, show_default=True, type=int)
@click.option("--sigma", default=0.1, show_default=True, type=float)
@click.option("--outdir", required=True, type=click.Path())
def synth_scene_cmd(seed, objects, gaussians_per_object, num_cameras, image_size,
                    channels, sigma, outdir):
    """Generate a labeled synthetic scene with oracle features and GT labels."""
    try:
        lo, hi = (int(x) for x in objects.split(":"))
    except ValueError:
        raise ContractError(f"--objects must be min:max, got {objects!r}")
    spec = synthetic.SyntheticSpec(
        min_objects=lo, max_objects=hi, gaussians_per_object=gaussians_per_object,
        channels=channels, feature_noise=sigma, num_cameras=num_cameras,
        image_size=image_size)
    synth = synthetic.synth_scene(spec, seed)
    outdir = Path(outdir)
    (outdir / "features").mkdir(parents=True, exist_ok=True)
    (outdir / "gt").mkdir(parents=True, exist_ok=True)
    save_scene(synth.scene, outdir / "scene.ply")
    save_cameras(synth.cameras, outdir / "cameras.json")
    TextQuerySet(labels=synth.class_names,
                 embeddings=synth.prototypes.astype(np.float32)).save(
        outdir / "queries.sgte")
    np.save(outdir / "gaussian_labels.npy", synth.labels)
    for i, cam in enumerate(synth.cameras):
        gt = synthetic.gt_view_labels(synth, cam)
        formats.write_label_png(outdir / "gt" / f"{i:04d}.png", gt)
        fmap = synthetic.synth_features(synth, cam, sigma, seed * 7919 + i)
        fmap.save(outdir / "features" / f"{i:04d}.sgfm")
    click.echo(f"wrote scene with {len(synth.scene)} gaussians, "
               f"{synth.num_classes} classes to {outdir}")


@cli.command(**_cmd("eval-seg"))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True),
              help="Label PNG or directory of them.")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--classes", "num_classes", required=True, type=int)
@click.option("--out", "out_path", type=click.Path())
def eval_seg_cmd(pred_path, gt_path, num_classes, out_path):
    """Segmentation metrics (per-class IoU, mIoU, mAcc) over label images."""
    pairs = _pair_label_files(Path(pred_path), Path(gt_path))
    conf = np.zeros((num_classes, num_classes + 1), dtype=np.int64)
    for p, g in pairs:
        m = synthetic.miou(formats.read_label_png(p), formats.read_label_png(g),
                           num_classes)
        conf += m.confusion
    agg = _metrics_from_confusion(conf)
    result = {
        "views": len(pairs),
        "per_class_iou": [None if np.isnan(v) else float(v) for v in agg.per_class_iou],
        "miou": agg.miou,
        "macc": agg.macc,
    }
    click.echo(f"{'class':>8} {'IoU':>8}")
    for k, v in enumerate(agg.per_class_iou):
        click.echo(f"{k:>8} {'-' if np.isnan(v) else format(v, '8.4f')}")
    click.echo(f"mIoU {agg.miou:.4f}  mAcc {agg.macc:.4f}  ({len(pairs)} views)")
    if out_path:
        Path(out_path).write_text(json.dumps(result))


def _pair_label_files(pred: Path, gt: Path):
    if pred.is_dir() != gt.is_dir():
        raise ContractError("--pred and --gt must both be files or both directories")
    if not pred.is_dir():
        return [(pred, gt)]
    preds = sorted(pred.glob("*.png"))
    gts = sorted(gt.glob("*.png"))
    if len(preds) != len(gts) or not preds:
        raise ContractError(
            f"prediction/GT directories differ: {len(preds)} vs {len(gts)} label images")
    return list(zip(preds, gts))


def _metrics_from_confusion(conf: np.ndarray) -> synthetic.SegMetrics:
    k = conf.shape[0]
    tp = np.diag(conf[:, :k]).astype(np.float64)
    gt_count = conf.sum(axis=1).astype(np.float64)
    pred_count = conf[:, :k].sum(axis=0).astype(np.float64)
    present = gt_count > 0
    union = gt_count + pred_count - tp
    iou = np.full(k, np.nan)
    recall = np.full(k, np.nan)
    iou[present] = tp[present] / union[present]
    recall[present] = tp[present] / gt_count[present]
    return synthetic.SegMetrics(
        per_class_iou=iou,
        miou=float(np.nanmean(iou[present])) if present.any() else float("nan"),
        macc=float(np.nanmean(recall[present])) if present.any() else float("nan"),
        confusion=conf,
    )


@cli.command(**_cmd("eval-loc"))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True),
              help="JSON list of [x, y] pixels.")
@click.option("--boxes", "boxes_path", required=True, type=click.Path(exists=True),
              help="JSON list of [x0, y0, x1, y1] boxes, one per pixel.")
@click.option("--out", "out_path", type=click.Path())
def eval_loc_cmd(pred_path, boxes_path, out_path):
    """Localization accuracy: fraction of predicted pixels inside their GT box."""
    pixels = json.loads(Path(pred_path).read_text())
    boxes = json.loads(Path(boxes_path).read_text())
    acc = synthetic.loc_accuracy([tuple(p) for p in pixels], [tuple(b) for b in boxes])
    click.echo(f"localization accuracy {acc:.4f} over {len(pixels)} queries")
    if out_path:
        Path(out_path).write_text(json.dumps({"accuracy": acc, "queries": len(pixels)}))


@cli.command(**_cmd("validate"))
@click.option("--featuremap", "featuremaps", multiple=True, type=click.Path())
@click.option("--field", "fields", multiple=True, type=click.Path())
@click.option("--queries", "queries", multiple=True, type=click.Path())
@click.option("--net", "nets", multiple=True, type=click.Path())
@click.option("--scene", "scenes", multiple=True, type=click.Path())
@click.option("--camera", "cameras", multiple=True, type=click.Path())
@click.option("--maskset", "masksets", multiple=True, type=click.Path())
def validate_cmd(featuremaps, fields, queries, nets, scenes, cameras, masksets):
    """Fully parse and check toolkit files; fails on the first invalid one."""
    checked = 0
    for group, expected in ((featuremaps, "feature_map"), (fields, "semantic_field"),
                            (queries, "text_queries"), (nets, "network")):
        for path in group:
            info = formats.validate_file(path)
            if info["kind"] != expected:
                raise FormatError(f"{path}: contains a {info['kind']}, expected {expected}")
            click.echo(f"ok {path}: {info}")
            checked += 1
    for path in scenes:
        scene = load_ply(path)
        click.echo(f"ok {path}: scene with {len(scene)} gaussians, SH degree {scene.sh_degree}")
        checked += 1
    for path in cameras:
        cams = load_cameras(path)
        click.echo(f"ok {path}: {len(cams)} cameras")
        checked += 1
    for path in masksets:
        masks = formats.read_mask_set(path)
        click.echo(f"ok {path}: {len(masks)} masks")
        checked += 1
    if checked == 0:
        raise click.UsageError("nothing to validate; pass at least one file flag")


def main():
    cli(prog_name="semsplat")


if __name__ == "__main__":
    main()
