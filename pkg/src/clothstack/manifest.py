"""Pipeline manifest: a versioned JSON description of one reconstruction run.

Relative paths resolve against the manifest's directory. Validation loads
and cross-checks every referenced file and reports every problem it finds,
not just the first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ClothstackError

MANIFEST_VERSION = 1

DEFAULT_PARAMS = {
    "epsilon": 0.002,          # inter-layer thickness (m)
    "delta": 0.01,             # loss clamp (m)
    "tau": 0.003,              # marching cubes threshold (m)
    "pe_count": 4,
    "grid_resolution": 256,
    "hidden_widths": [128, 256, 256, 128],
    "sample_counts": [200000, 200000, 100000],
    "sample_sigma": 0.01,
    "orient_view_dir": [0.0, 0.0, -1.0],
    "orient_xi": 0.005,
    "train": {"learning_rate": 1e-4, "batch_size": 4096,
              "iterations": 20000, "seed": 0},
    "metrics": {"n_samples": 100000, "resolution": 1024, "seed": 0},
}


class ManifestValidationError(ClothstackError):
    """Carries every validation problem found in a manifest."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("manifest validation failed:\n"
                         + "\n".join(f"  - {e}" for e in self.errors))


@dataclass
class LayerEntry:
    mesh: Path
    pose: Path
    garment_label: int
    label_source: str              # "vertex" | "file" | "masks"
    label_file: Path | None = None
    mask_files: list = field(default_factory=list)
    camera_file: Path | None = None
    smoothing_iters: int = 3


@dataclass
class Manifest:
    root: Path
    body_mesh: Path
    body_weights: Path
    body_joints: Path | None
    canonical_pose: Path | None
    layers: list
    params: dict
    reference_meshes: list
    seed: int
    output_dir: Path

    @property
    def n_layers(self) -> int:
        return len(self.layers)


def _merge_params(user: dict) -> dict:
    params = json.loads(json.dumps(DEFAULT_PARAMS))
    for key, value in (user or {}).items():
        if isinstance(value, dict) and isinstance(params.get(key), dict):
            params[key].update(value)
        else:
            params[key] = value
    return params


def load_manifest(path) -> Manifest:
    """Parse a manifest without cross-checking file contents."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("version") != MANIFEST_VERSION:
        raise ManifestValidationError(
            [f"version: expected {MANIFEST_VERSION}, got {data.get('version')}"])
    root = path.parent
    body = data.get("body", {})

    def respath(rel):
        return None if rel is None else (root / rel)

    layers = []
    for i, entry in enumerate(data.get("layers", [])):
        labels = entry.get("labels", {"source": "vertex"})
        layers.append(LayerEntry(
            mesh=respath(entry.get("mesh")),
            pose=respath(entry.get("pose")),
            garment_label=int(entry.get("garment_label", 1)),
            label_source=labels.get("source", "vertex"),
            label_file=respath(labels.get("file")),
            mask_files=[respath(m) for m in labels.get("masks", [])],
            camera_file=respath(labels.get("cameras")),
            smoothing_iters=int(labels.get("smoothing_iters", 3)),
        ))
    return Manifest(
        root=root,
        body_mesh=respath(body.get("mesh")),
        body_weights=respath(body.get("weights")),
        body_joints=respath(body.get("joints")),
        canonical_pose=respath(data.get("canonical_pose")),
        layers=layers,
        params=_merge_params(data.get("params")),
        reference_meshes=[respath(r) for r in data.get("reference_meshes", [])],
        seed=int(data.get("seed", 0)),
        output_dir=root / data.get("output_dir", "out"),
    )


def validate_manifest(path) -> Manifest:
    """Full validation; raises ManifestValidationError listing every problem."""
    from .geometry import load_mesh
    from .geometry.meshio import _load_label_sidecar
    from .rasterview import load_cameras, load_mask
    from .skinning import load_pose, load_weights

    errors = []
    try:
        manifest = load_manifest(path)
    except ManifestValidationError as exc:
        raise exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestValidationError([f"manifest: {exc}"])

    body_mesh = None
    body_weights = None
    if manifest.body_mesh is None:
        errors.append("body.mesh: missing")
    elif not manifest.body_mesh.exists():
        errors.append(f"body.mesh: file not found: {manifest.body_mesh}")
    else:
        try:
            body_mesh = load_mesh(manifest.body_mesh)
        except ClothstackError as exc:
            errors.append(f"body.mesh: {exc}")
    if manifest.body_weights is None:
        errors.append("body.weights: missing")
    elif not manifest.body_weights.exists():
        errors.append(f"body.weights: file not found: {manifest.body_weights}")
    else:
        try:
            body_weights = load_weights(manifest.body_weights)
        except ClothstackError as exc:
            errors.append(f"body.weights: {exc}")
    if body_mesh is not None and body_weights is not None \
            and len(body_weights) != body_mesh.n_vertices:
        errors.append(
            f"body.weights: {len(body_weights)} rows for "
            f"{body_mesh.n_vertices} body vertices")
    joint_count = None if body_weights is None else body_weights.shape[1]

    if manifest.body_joints is not None:
        if not manifest.body_joints.exists():
            errors.append(f"body.joints: file not found: {manifest.body_joints}")
        else:
            try:
                with open(manifest.body_joints, "r", encoding="utf-8") as fh:
                    joints = np.asarray(json.load(fh), dtype=np.float64)
                if joints.ndim != 2 or joints.shape[1] != 3:
                    errors.append("body.joints: expected a list of 3-D points")
                elif joint_count is not None and len(joints) != joint_count:
                    errors.append(
                        f"body.joints: {len(joints)} joints but weights have "
                        f"{joint_count}")
            except (json.JSONDecodeError, ValueError) as exc:
                errors.append(f"body.joints: {exc}")

    if manifest.canonical_pose is not None:
        if not manifest.canonical_pose.exists():
            errors.append(
                f"canonical_pose: file not found: {manifest.canonical_pose}")
        else:
            try:
                pose = load_pose(manifest.canonical_pose)
                if joint_count is not None and pose.joint_count != joint_count:
                    errors.append(
                        f"canonical_pose: {pose.joint_count} joints but "
                        f"weights have {joint_count}")
            except ClothstackError as exc:
                errors.append(f"canonical_pose: {exc}")

    if not manifest.layers:
        errors.append("layers: at least one layer is required")
    for i, layer in enumerate(manifest.layers):
        loc = f"layers[{i}]"
        mesh = None
        if layer.mesh is None:
            errors.append(f"{loc}.mesh: missing")
        elif not layer.mesh.exists():
            errors.append(f"{loc}.mesh: file not found: {layer.mesh}")
        else:
            try:
                mesh = load_mesh(layer.mesh)
            except ClothstackError as exc:
                errors.append(f"{loc}.mesh: {exc}")
        if layer.pose is None:
            errors.append(f"{loc}.pose: missing")
        elif not layer.pose.exists():
            errors.append(f"{loc}.pose: file not found: {layer.pose}")
        else:
            try:
                pose = load_pose(layer.pose)
                if joint_count is not None and pose.joint_count != joint_count:
                    errors.append(
                        f"{loc}.pose: {pose.joint_count} joints but weights "
                        f"have {joint_count}")
            except ClothstackError as exc:
                errors.append(f"{loc}.pose: {exc}")

        if layer.label_source == "vertex":
            if mesh is not None:
                if mesh.labels is None:
                    errors.append(
                        f"{loc}.labels: mesh file carries no labels")
                elif layer.garment_label not in mesh.labels:
                    errors.append(
                        f"{loc}.labels: garment label {layer.garment_label} "
                        "absent from mesh labels")
        elif layer.label_source == "file":
            if layer.label_file is None:
                errors.append(f"{loc}.labels: file source needs 'file'")
            elif not layer.label_file.exists():
                errors.append(
                    f"{loc}.labels: file not found: {layer.label_file}")
            elif mesh is not None:
                try:
                    labels = _load_label_sidecar(layer.label_file,
                                                 mesh.n_vertices)
                    if layer.garment_label not in labels:
                        errors.append(
                            f"{loc}.labels: garment label "
                            f"{layer.garment_label} absent from file")
                except ClothstackError as exc:
                    errors.append(f"{loc}.labels: {exc}")
        elif layer.label_source == "masks":
            if not layer.mask_files:
                errors.append(f"{loc}.labels: masks source needs 'masks'")
            if layer.camera_file is None:
                errors.append(f"{loc}.labels: masks source needs 'cameras'")
            elif not layer.camera_file.exists():
                errors.append(
                    f"{loc}.labels: cameras file not found: {layer.camera_file}")
            else:
                try:
                    cameras = load_cameras(layer.camera_file)
                    if len(cameras) != len(layer.mask_files):
                        errors.append(
                            f"{loc}.labels: {len(layer.mask_files)} masks but "
                            f"{len(cameras)} cameras")
                except (ClothstackError, KeyError, json.JSONDecodeError) as exc:
                    errors.append(f"{loc}.labels: cameras: {exc}")
            for mf in layer.mask_files:
                if not mf.exists():
                    errors.append(f"{loc}.labels: mask not found: {mf}")
                else:
                    try:
                        load_mask(mf)
                    except ClothstackError as exc:
                        errors.append(f"{loc}.labels: {exc}")
        else:
            errors.append(
                f"{loc}.labels: unknown source {layer.label_source!r}")

    for i, ref in enumerate(manifest.reference_meshes):
        if ref is not None and not ref.exists():
            errors.append(f"reference_meshes[{i}]: file not found: {ref}")

    p = manifest.params
    for key in ("epsilon", "delta", "tau"):
        if not (isinstance(p.get(key), (int, float)) and p[key] > 0):
            errors.append(f"params.{key}: must be a positive number")
    if not (isinstance(p.get("pe_count"), int) and p["pe_count"] >= 0):
        errors.append("params.pe_count: must be a non-negative integer")
    if not (isinstance(p.get("grid_resolution"), int)
            and p["grid_resolution"] >= 2):
        errors.append("params.grid_resolution: must be an integer >= 2")

    if errors:
        raise ManifestValidationError(errors)
    return manifest
