"""Command-line entry points: benchmarks, evaluation, map generation, HTTP service."""

from __future__ import annotations

import glob
import json
import math
import os
import pathlib

import click
import numpy as np

from . import evaluation
from .annotation import annotations_from_csv, annotations_from_json
from .fields import GridGeometry, TransformField
from .gp import DeformationGP
from .kernels import KernelSpec
from .suggestion import TargetSet
from .synth import BenchmarkConfig, rows_to_csv, run_benchmark


@click.group()
def main():
    """Uncertainty-aware gold standards for deformable registration."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def benchmark(config_path, out_dir, seed):
    """Run the synthetic benchmark described by a JSON config."""
    with open(config_path) as f:
        config = BenchmarkConfig.from_json(f.read())
    if seed is not None:
        config.seed = seed
    rows, summary = run_benchmark(config)
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(rows))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    click.echo(f"wrote {out / 'results.csv'} and {out / 'summary.json'}")


def _load_annotations(path: str):
    text = pathlib.Path(path).read_text()
    if path.endswith(".json"):
        return annotations_from_json(text)
    return annotations_from_csv(text)


@main.command()
@click.option("--annotations", "annotations_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--transforms", "transforms_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--kernel", "kernel_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--targets", "targets_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="JSON array of target points; defaults to the annotated locations.")
def evaluate(annotations_path, transforms_dir, kernel_path, out_dir, targets_path):
    """Score candidate transformations with both evaluation methods."""
    annotations = _load_annotations(annotations_path)
    spec = KernelSpec.from_json(pathlib.Path(kernel_path).read_text())
    session = DeformationGP(kernel=spec).fit_annotations(annotations)
    bases = sorted(p[: -len(".json")] for p in glob.glob(os.path.join(transforms_dir, "*.json")))
    if not bases:
        raise click.ClickException(f"no transformations found in {transforms_dir}")
    phi_hats = [TransformField.load(b) for b in bases]
    if targets_path is not None:
        T = TargetSet(points=np.asarray(json.loads(pathlib.Path(targets_path).read_text()), dtype=float))
    else:
        T = TargetSet(points=np.stack([a.x for a in annotations]))
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for method in ("landmark", "proposed"):
        report = evaluation.score_candidates(phi_hats, session, T, method=method)
        report.candidate_ids = [os.path.basename(b) for b in bases]
        (out / f"scores_{method}.csv").write_text(report.to_csv())
    click.echo(f"wrote score reports to {out}")


@main.command()
@click.option("--session", "session_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--transform", "transform_base", required=True, help="Path base of the <base>.raw/.json field.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--stride", type=int, default=None, help="Map grid stride (default 2 in 2-D, 4 in 3-D).")
def maps(session_path, transform_base, out_dir, stride):
    """Emit error, entropy and blended maps for one candidate transformation."""
    session = DeformationGP.from_json(pathlib.Path(session_path).read_text())
    phi_hat = TransformField.load(transform_base)
    if stride is None:
        stride = evaluation.DEFAULT_MAP_STRIDE_2D if session.dimension == 2 else evaluation.DEFAULT_MAP_STRIDE_3D
    geom = phi_hat.geometry.strided(stride)
    err = evaluation.error_heat_map(phi_hat, session, geom)
    ent = evaluation.entropy_map(session, geom)
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.save_map(err, str(out / "error_map"))
    evaluation.save_map(ent, str(out / "entropy_map"))
    if session.dimension == 2:
        from PIL import Image

        rgba = evaluation.blended_map(err, ent)
        Image.fromarray(rgba, mode="RGBA").save(out / "blended_map.png")
    click.echo(f"wrote maps to {out}")


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--store", "store_dir", default=None, type=click.Path(file_okay=False),
              help="Directory for crash-safe session logs (in-memory only if omitted).")
def serve(port, host, store_dir):
    """Serve the interactive annotation HTTP API."""
    import uvicorn

    from .server import create_app

    app = create_app(store_dir=store_dir, data_dir=os.environ.get("REGMARK_DATA_DIR"))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
