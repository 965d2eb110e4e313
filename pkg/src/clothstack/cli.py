"""Command-line interface: validate manifests, run the pipeline, score
meshes, and generate synthetic fixtures."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import ClothstackError, StageError
from .manifest import ManifestValidationError, validate_manifest

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_STAGE = 2
EXIT_IO = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option()
def main():
    """Multi-layer garment reconstruction pipeline."""


@main.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(path_type=Path), help="Manifest JSON file.")
def validate(manifest_path):
    """Validate a manifest and report every problem found."""
    try:
        manifest = validate_manifest(manifest_path)
    except ManifestValidationError as exc:
        for err in exc.errors:
            click.echo(f"invalid: {err}", err=True)
        sys.exit(EXIT_VALIDATION)
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"ok: {manifest.n_layers} layer(s), "
               f"output -> {manifest.output_dir}")


@main.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(path_type=Path), help="Manifest JSON file.")
@click.option("--stages", default=None,
              help="Stage or inclusive range, e.g. 'canonicalize..udf'.")
@click.option("--seed", type=int, default=None,
              help="Override the manifest seed.")
@click.option("--threads", type=int, default=1, envvar="CLOTHSTACK_THREADS",
              show_envvar=True, help="Worker threads for per-layer stages.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path),
              default=None, help="Override the manifest output directory.")
def run(manifest_path, stages, seed, threads, out_dir):
    """Run the reconstruction pipeline (or a stage range) on a manifest."""
    from .pipeline import run_pipeline

    try:
        record = run_pipeline(manifest_path, stages=stages, seed=seed,
                              threads=threads, out_dir=out_dir)
    except ManifestValidationError as exc:
        for err in exc.errors:
            click.echo(f"invalid: {err}", err=True)
        sys.exit(EXIT_VALIDATION)
    except StageError as exc:
        _fail(EXIT_STAGE, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    for st in record.stages:
        click.echo(f"stage {st['name']}: {st['wall_time_s']:.2f}s, "
                   f"{len(st['outputs'])} artifact(s)"
                   + (f", {len(st['warnings'])} warning(s)"
                      if st["warnings"] else ""))
    click.echo(f"run record -> {Path(record.output_files[-1]).parent.parent / 'run_record.json'}"
               if record.output_files else "no stages executed")


@main.command()
@click.option("--outer", required=True, type=click.Path(path_type=Path),
              help="Outer mesh to score.")
@click.option("--inner", multiple=True, type=click.Path(path_type=Path),
              help="Inner meshes (repeatable), e.g. body and lower layers.")
@click.option("--reference", type=click.Path(path_type=Path), default=None,
              help="Reference mesh for Chamfer/normal consistency.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path),
              default=None, help="Write report.json/.csv and figures here.")
@click.option("--n-samples", type=int, default=100000, show_default=True)
@click.option("--resolution", type=int, default=1024, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def metrics(outer, inner, reference, out_dir, n_samples, resolution, seed):
    """Score meshes: Chamfer, normal consistency, intersection ratio."""
    from .geometry import load_mesh
    from .metrics import (MetricReport, chamfer_distance, intersection_ratio,
                          normal_consistency)
    from .report import write_report_files

    try:
        outer_mesh = load_mesh(outer)
        inner_meshes = [load_mesh(p) for p in inner]
        row = {"layer": 1, "chamfer_mm": None, "normal_consistency": None,
               "ir_refined_percent": None, "ir_registered_percent": None}
        if inner_meshes:
            row["ir_refined_percent"] = intersection_ratio(
                outer_mesh, inner_meshes, resolution=resolution, seed=seed)
            click.echo(f"intersection_ratio: {row['ir_refined_percent']:.4f} %")
        if reference is not None:
            ref = load_mesh(reference)
            row["chamfer_mm"] = chamfer_distance(outer_mesh, ref, n_samples,
                                                 seed=seed)
            row["normal_consistency"] = normal_consistency(outer_mesh, ref,
                                                           n_samples, seed=seed)
            click.echo(f"chamfer_mm: {row['chamfer_mm']:.4f}")
            click.echo(f"normal_consistency: {row['normal_consistency']:.4f}")
        if not inner_meshes and reference is None:
            _fail(EXIT_VALIDATION,
                  "nothing to compute: give --inner and/or --reference")
        report = MetricReport(
            chamfer_mm=row["chamfer_mm"],
            normal_consistency=row["normal_consistency"],
            intersection_ratio_percent=row["ir_refined_percent"],
            per_layer=[row], sample_count=n_samples, resolution=resolution,
            seed=seed)
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            report.save(out_dir / "report.json")
            write_report_files(out_dir, report)
            click.echo(f"report -> {out_dir}")
    except ClothstackError as exc:
        _fail(EXIT_STAGE, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))


@main.command()
@click.option("--out", "out_dir", required=True,
              type=click.Path(path_type=Path), help="Fixture directory.")
@click.option("--layers", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--radial", type=int, default=48, show_default=True,
              help="Radial segments of the capsule-chain body.")
@click.option("--rings", type=int, default=64, show_default=True,
              help="Axial rings along the body.")
@click.option("--penetration", type=float, default=0.1, show_default=True,
              help="Fraction of garment vertices seeded inside inner layers.")
@click.option("--pose-magnitude", type=float, default=0.1, show_default=True,
              help="Max per-joint rotation of the captured poses (radians).")
def synth(out_dir, layers, seed, radial, rings, penetration, pose_magnitude):
    """Generate a synthetic body + layered garments fixture with manifest."""
    from .synthgen import small_pipeline_spec, write_fixture

    if layers < 1:
        _fail(EXIT_VALIDATION, "--layers must be >= 1")
    spec = small_pipeline_spec(layers=layers, seed=seed,
                               radial_segments=radial, height_rings=rings,
                               penetration_fraction=penetration)
    try:
        manifest_path = write_fixture(out_dir, spec,
                                      pose_magnitude=pose_magnitude)
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"fixture manifest -> {manifest_path}")


if __name__ == "__main__":
    main()
