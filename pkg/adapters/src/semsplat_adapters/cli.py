"""Adapter command line: export encoder outputs into toolkit file formats."""

from __future__ import annotations

from pathlib import Path

import click
import numpy as np

from .backends import make_backend
from .errors import AdapterError
from .formats import write_text_queries
from .jobs import AdapterJob, export_features


class AdapterCommand(click.Command):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except AdapterError as e:
            raise click.ClickException(str(e)) from e
        except OSError as e:
            raise click.ClickException(str(e)) from e


@click.group()
def cli():
    """Export 2D model outputs into the splat toolkit's file formats."""


@cli.command(cls=AdapterCommand, name="export-features")
@click.option("--image", "images", required=True, multiple=True,
              type=click.Path(exists=True), help="Input images, in view order.")
@click.option("--backend", default="colorstats", show_default=True)
@click.option("--channels", default=16, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--half", is_flag=True, help="Store features as float16.")
@click.option("--outdir", required=True, type=click.Path())
def export_features_cmd(images, backend, channels, seed, half, outdir):
    """Per-pixel feature maps, one SGFM per image named by view index."""
    job = AdapterJob(images=tuple(images), kind="pixel", out_dir=Path(outdir),
                     channels=channels, backend=backend, seed=seed, half=half)
    for path in export_features(job):
        click.echo(f"wrote {path}")


@cli.command(cls=AdapterCommand, name="export-masks")
@click.option("--image", "images", required=True, multiple=True,
              type=click.Path(exists=True))
@click.option("--level", default="instance", show_default=True,
              type=click.Choice(["instance", "image"]))
@click.option("--backend", default="colorstats", show_default=True)
@click.option("--channels", default=16, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--outdir", required=True, type=click.Path())
def export_masks_cmd(images, level, backend, channels, seed, outdir):
    """Mask sets with per-mask embeddings (PNG + JSON per image)."""
    job = AdapterJob(images=tuple(images), kind=level, out_dir=Path(outdir),
                     channels=channels, backend=backend, seed=seed)
    for path in export_features(job):
        click.echo(f"wrote {path}")


@cli.command(cls=AdapterCommand, name="export-idmap")
@click.option("--image", "images", required=True, multiple=True,
              type=click.Path(exists=True))
@click.option("--outdir", required=True, type=click.Path())
def export_idmap_cmd(images, outdir):
    """Instance-id maps as 16-bit PNGs (0 = background)."""
    job = AdapterJob(images=tuple(images), kind="idmap", out_dir=Path(outdir))
    for path in export_features(job):
        click.echo(f"wrote {path}")


@cli.command(cls=AdapterCommand, name="export-text")
@click.option("--labels", required=True,
              help="Comma-separated label list to encode.")
@click.option("--backend", default="colorstats", show_default=True)
@click.option("--channels", default=16, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def export_text_cmd(labels, backend, channels, seed, out_path):
    """Encode a label list into an SGTE query file (unit-norm rows)."""
    names = [x.strip() for x in labels.split(",") if x.strip()]
    if not names:
        raise AdapterError("no labels given")
    enc = make_backend(backend, channels=channels, seed=seed)
    rows = enc.encode_labels(names)
    norms = np.linalg.norm(rows.astype(np.float64), axis=1, keepdims=True)
    rows = (rows / norms).astype(np.float32)
    write_text_queries(out_path, names, rows)
    click.echo(f"wrote {out_path} ({len(names)} labels, {rows.shape[1]} channels)")


def main():
    cli(prog_name="semsplat-adapt")


if __name__ == "__main__":
    main()
