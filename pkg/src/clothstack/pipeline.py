"""Manifest-driven orchestration of the full reconstruction pipeline.

Stages run in a fixed order; each stage writes its artifacts under the
output directory and later stages can resume from those files, so a run
restricted to a stage range behaves exactly like the matching slice of a
full run.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ClothstackError, StageError
from .geometry import TriMesh, load_mesh, save_mesh
from .geometry.meshio import _load_label_sidecar
from .geometry.trimesh import submesh
from .layering import Layer, LayerStack, remove_penetrations
from .manifest import Manifest, validate_manifest
from .metrics import MetricReport, chamfer_distance, intersection_ratio, normal_consistency
from .rasterview import load_cameras, load_mask, refine_labels, vote_vertex_labels
from .skinning import (
    Pose,
    SkinnedBody,
    lbs_forward,
    lbs_inverse,
    load_pose,
    load_skinned_body,
    transfer_weights,
)
from .udf import (
    MlpUdf,
    TrainConfig,
    load_model,
    sample_training_points,
    save_loss_history,
    save_model,
    train_udf,
)

STAGES = ("labels", "canonicalize", "penetration", "udf", "extract", "metrics")


def parse_stage_range(spec: str | None) -> list:
    """'A..B' (inclusive), a single stage name, or None for all stages."""
    if spec is None or spec == "":
        return list(STAGES)
    if ".." in spec:
        first, last = spec.split("..", 1)
    else:
        first = last = spec
    first = first or STAGES[0]
    last = last or STAGES[-1]
    if first not in STAGES or last not in STAGES:
        raise StageError(f"unknown stage in range {spec!r}; "
                         f"stages are {', '.join(STAGES)}")
    i, j = STAGES.index(first), STAGES.index(last)
    if i > j:
        raise StageError(f"stage range {spec!r} runs backwards")
    return list(STAGES[i:j + 1])


@dataclass
class RunRecord:
    tool_version: str
    manifest_path: str
    params: dict
    seed: int
    threads: int
    stages: list = field(default_factory=list)

    def add_stage(self, name, wall_time_s, outputs, warnings_):
        self.stages.append({
            "name": name,
            "wall_time_s": wall_time_s,
            "outputs": [str(p) for p in outputs],
            "warnings": [str(w) for w in warnings_],
        })

    def to_json(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "manifest_path": self.manifest_path,
            "params": self.params,
            "seed": self.seed,
            "threads": self.threads,
            "stages": self.stages,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @property
    def output_files(self) -> list:
        out = []
        for st in self.stages:
            out.extend(st["outputs"])
        return out


class _Run:
    """Mutable state threaded through the stages of one pipeline run."""

    def __init__(self, manifest: Manifest, out_dir: Path, seed: int,
                 threads: int):
        self.manifest = manifest
        self.out = out_dir
        self.seed = seed
        self.threads = max(1, threads)
        self.body = load_skinned_body(manifest.body_mesh,
                                      manifest.body_weights,
                                      manifest.body_joints)
        if manifest.canonical_pose is not None:
            self.canonical_pose = load_pose(manifest.canonical_pose)
        else:
            self.canonical_pose = Pose.identity(self.body.joint_count)
        self.canonical_body = self._pose_body(self.canonical_pose)
        self.labels = None        # list of per-vertex label arrays
        self.canonical = None     # list of TriMesh in canonical pose
        self.registered = None    # list of TriMesh after penetration removal
        self.models = None        # list of MlpUdf
        self.garments = None      # list of TriMesh (refined, oriented)
        self.report = None

    def _pose_body(self, pose: Pose) -> SkinnedBody:
        if np.allclose(pose.bone_transforms,
                       np.tile(np.eye(4), (pose.joint_count, 1, 1))):
            return self.body
        posed = lbs_forward(self.body.mesh.vertices, self.body.weights, pose)
        joints = self.body.joints
        return SkinnedBody(mesh=self.body.mesh.with_vertices(posed),
                           weights=self.body.weights, joints=joints)

    def _map_layers(self, fn):
        if self.threads == 1 or self.manifest.n_layers == 1:
            return [fn(k) for k in range(self.manifest.n_layers)]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, range(self.manifest.n_layers)))

    # ------------------------------------------------------------ stages

    def stage_labels(self):
        outputs = []
        labels = []
        label_dir = self.out / "labels"
        label_dir.mkdir(parents=True, exist_ok=True)
        for k, layer in enumerate(self.manifest.layers):
            mesh = load_mesh(layer.mesh)
            if layer.label_source == "vertex":
                if mesh.labels is None:
                    raise StageError(f"layer {k}: mesh carries no labels",
                                     stage="labels", layer=k)
                lab = mesh.labels.copy()
            elif layer.label_source == "file":
                lab = _load_label_sidecar(layer.label_file, mesh.n_vertices)
            elif layer.label_source == "masks":
                cameras = load_cameras(layer.camera_file)
                masks = [load_mask(m) for m in layer.mask_files]
                voted = vote_vertex_labels(mesh, list(zip(cameras, masks)))
                voted = refine_labels(mesh, voted, layer.smoothing_iters)
                lab = voted * layer.garment_label
            else:
                raise StageError(f"layer {k}: unknown label source",
                                 stage="labels", layer=k)
            path = label_dir / f"layer{k + 1}.labels"
            with open(path, "w", encoding="utf-8") as fh:
                fh.writelines(f"{int(x)}\n" for x in lab)
            outputs.append(path)
            labels.append(lab)
        self.labels = labels
        return outputs

    def _ensure_labels(self):
        if self.labels is not None:
            return
        self.labels = []
        for k, layer in enumerate(self.manifest.layers):
            path = self.out / "labels" / f"layer{k + 1}.labels"
            if not path.exists():
                raise StageError(
                    f"labels artifact missing: {path}; run the labels stage",
                    stage="canonicalize", layer=k)
            mesh = load_mesh(layer.mesh)
            self.labels.append(_load_label_sidecar(path, mesh.n_vertices))

    def stage_canonicalize(self):
        self._ensure_labels()
        outputs = []
        out_dir = self.out / "canonical"
        out_dir.mkdir(parents=True, exist_ok=True)
        canonical = []
        identity_target = np.allclose(
            self.canonical_pose.bone_transforms,
            np.tile(np.eye(4), (self.canonical_pose.joint_count, 1, 1)))
        for k, layer in enumerate(self.manifest.layers):
            mesh = load_mesh(layer.mesh)
            pose = load_pose(layer.pose)
            posed_body = self._pose_body(pose)
            weights = transfer_weights(posed_body, mesh)
            verts = lbs_inverse(mesh.vertices, weights, pose)
            if not identity_target:
                verts = lbs_forward(verts, weights, self.canonical_pose)
            canon = TriMesh(verts, mesh.faces.copy(), self.labels[k].copy())
            path = out_dir / f"layer{k + 1}.ply"
            save_mesh(path, canon)
            outputs.append(path)
            canonical.append(canon)
        self.canonical = canonical
        return outputs

    def _ensure_canonical(self):
        if self.canonical is not None:
            return
        self.canonical = self._load_stage_meshes("canonical", "layer",
                                                 "penetration")

    def _load_stage_meshes(self, sub, prefix, needed_by):
        meshes = []
        for k in range(self.manifest.n_layers):
            path = self.out / sub / f"{prefix}{k + 1}.ply"
            if not path.exists():
                raise StageError(
                    f"{sub} artifact missing: {path}; run earlier stages",
                    stage=needed_by, layer=k)
            meshes.append(load_mesh(path))
        return meshes

    def stage_penetration(self):
        self._ensure_canonical()
        outputs = []
        out_dir = self.out / "penetration"
        out_dir.mkdir(parents=True, exist_ok=True)
        layers = []
        for k, (mesh, entry) in enumerate(zip(self.canonical,
                                              self.manifest.layers)):
            if mesh.labels is None:
                raise StageError(f"layer {k}: canonical mesh lost its labels",
                                 stage="penetration", layer=k)
            garment = np.nonzero(mesh.labels == entry.garment_label)[0]
            layers.append(Layer(mesh=mesh, garment_set=garment))
        stack = LayerStack(body=self.canonical_body, layers=layers,
                           epsilon=float(self.manifest.params["epsilon"]))
        self.registered = remove_penetrations(stack)
        for k, mesh in enumerate(self.registered):
            path = out_dir / f"layer{k + 1}.ply"
            save_mesh(path, mesh)
            outputs.append(path)
        return outputs

    def _ensure_registered(self):
        if self.registered is None:
            self.registered = self._load_stage_meshes("penetration", "layer",
                                                      "udf")

    def stage_udf(self):
        self._ensure_registered()
        out_dir = self.out / "udf"
        out_dir.mkdir(parents=True, exist_ok=True)
        p = self.manifest.params
        train_p = p["train"]

        def fit(k):
            mesh = self.registered[k]
            entry = self.manifest.layers[k]
            garment = np.nonzero(mesh.labels == entry.garment_label)[0]
            samples = sample_training_points(
                mesh, garment, p["sample_counts"],
                sigma=float(p["sample_sigma"]),
                seed=self.seed + 1000 + k)
            model = MlpUdf.create(pe_count=int(p["pe_count"]),
                                  hidden=tuple(p["hidden_widths"]),
                                  clamp=float(p["delta"]),
                                  seed=self.seed + 2000 + k)
            config = TrainConfig(
                learning_rate=float(train_p["learning_rate"]),
                batch_size=int(train_p["batch_size"]),
                iterations=int(train_p["iterations"]),
                seed=int(train_p["seed"]) + k)
            return train_udf(model, samples, config)

        results = self._map_layers(fit)
        outputs = []
        self.models = []
        for k, (model, history) in enumerate(results):
            mpath = out_dir / f"layer{k + 1}.model.bin"
            hpath = out_dir / f"layer{k + 1}.loss.csv"
            save_model(mpath, model)
            save_loss_history(hpath, history)
            outputs += [mpath, hpath]
            self.models.append(model)
        return outputs

    def _ensure_models(self):
        if self.models is not None:
            return
        self.models = []
        for k in range(self.manifest.n_layers):
            path = self.out / "udf" / f"layer{k + 1}.model.bin"
            if not path.exists():
                raise StageError(
                    f"udf artifact missing: {path}; run the udf stage",
                    stage="extract", layer=k)
            self.models.append(load_model(path))

    def stage_extract(self):
        from .extraction import bake_grid, marching_cubes, orient_back_faces

        self._ensure_registered()
        self._ensure_models()
        out_dir = self.out / "extract"
        out_dir.mkdir(parents=True, exist_ok=True)
        p = self.manifest.params
        tau = float(p["tau"])
        if self.body.joints is not None:
            joints = self.body.joints
        else:
            joints = self.canonical_body.mesh.vertices.mean(axis=0)[None, :]

        def extract(k):
            mesh = self.registered[k]
            entry = self.manifest.layers[k]
            garment = np.nonzero(mesh.labels == entry.garment_label)[0]
            region = submesh(mesh, garment)
            lo, hi = region.bounds()
            pad = 0.05 * (hi - lo).max() + 4.0 * tau
            grid = bake_grid(self.models[k], (lo - pad, hi + pad),
                             int(p["grid_resolution"]))
            shell = marching_cubes(grid, tau)
            if shell.n_faces == 0:
                return shell
            return orient_back_faces(shell, joints,
                                     np.asarray(p["orient_view_dir"],
                                                dtype=np.float64),
                                     xi=float(p["orient_xi"]))

        self.garments = self._map_layers(extract)
        outputs = []
        for k, garment in enumerate(self.garments):
            path = out_dir / f"garment{k + 1}.ply"
            save_mesh(path, garment)
            outputs.append(path)
        return outputs

    def _ensure_garments(self):
        if self.garments is None:
            self.garments = self._load_stage_meshes("extract", "garment",
                                                    "metrics")

    def stage_metrics(self):
        from .report import write_report_files

        self._ensure_registered()
        self._ensure_garments()
        out_dir = self.out / "metrics"
        out_dir.mkdir(parents=True, exist_ok=True)
        p = self.manifest.params["metrics"]
        n_samples = int(p["n_samples"])
        resolution = int(p["resolution"])
        seed = int(p["seed"])
        body_mesh = self.canonical_body.mesh

        regions = []
        for mesh, entry in zip(self.registered, self.manifest.layers):
            garment = np.nonzero(mesh.labels == entry.garment_label)[0]
            regions.append(submesh(mesh, garment))

        refs = list(self.manifest.reference_meshes)
        per_layer = []
        for k in range(self.manifest.n_layers):
            row = {"layer": k + 1}
            row["ir_refined_percent"] = intersection_ratio(
                self.garments[k], [body_mesh] + self.garments[:k],
                resolution=resolution, seed=seed)
            row["ir_registered_percent"] = intersection_ratio(
                regions[k], [body_mesh] + regions[:k],
                resolution=resolution, seed=seed)
            if k < len(refs) and refs[k] is not None:
                ref = load_mesh(refs[k])
                row["chamfer_mm"] = chamfer_distance(
                    self.garments[k], ref, n_samples, seed=seed)
                row["normal_consistency"] = normal_consistency(
                    self.garments[k], ref, n_samples, seed=seed)
            else:
                row["chamfer_mm"] = None
                row["normal_consistency"] = None
            per_layer.append(row)

        cds = [r["chamfer_mm"] for r in per_layer if r["chamfer_mm"] is not None]
        ncs = [r["normal_consistency"] for r in per_layer
               if r["normal_consistency"] is not None]
        report = MetricReport(
            chamfer_mm=float(np.mean(cds)) if cds else None,
            normal_consistency=float(np.mean(ncs)) if ncs else None,
            intersection_ratio_percent=float(np.mean(
                [r["ir_refined_percent"] for r in per_layer])),
            per_layer=per_layer,
            sample_count=n_samples,
            resolution=resolution,
            seed=seed)
        self.report = report
        report.save(out_dir / "report.json")
        outputs = [out_dir / "report.json"]
        outputs += write_report_files(out_dir, report,
                                      loss_dir=self.out / "udf")
        return outputs


def run_pipeline(manifest, stages=None, seed=None, threads: int = 1,
                 out_dir=None) -> RunRecord:
    """Execute the requested stage range and write a RunRecord.

    `manifest` is a Manifest or a path to one (validated first). Stage
    failures raise StageError naming the stage and layer; artifacts written
    before the failure are retained.
    """
    if not isinstance(manifest, Manifest):
        manifest = validate_manifest(manifest)
    if isinstance(stages, str) or stages is None:
        stages = parse_stage_range(stages)
    for s in stages:
        if s not in STAGES:
            raise StageError(f"unknown stage {s!r}")

    out = Path(out_dir) if out_dir is not None else manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(manifest, out,
               seed=manifest.seed if seed is None else int(seed),
               threads=threads)
    record = RunRecord(tool_version=__version__,
                       manifest_path=str(manifest.root / "manifest.json"),
                       params=manifest.params, seed=run.seed, threads=threads)

    stage_fns = {
        "labels": run.stage_labels,
        "canonicalize": run.stage_canonicalize,
        "penetration": run.stage_penetration,
        "udf": run.stage_udf,
        "extract": run.stage_extract,
        "metrics": run.stage_metrics,
    }
    for name in STAGES:
        if name not in stages:
            continue
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                outputs = stage_fns[name]()
            except StageError:
                record.save(out / "run_record.json")
                raise
            except ClothstackError as exc:
                record.save(out / "run_record.json")
                raise StageError(f"stage {name} failed: {exc}",
                                 stage=name) from exc
        record.add_stage(name, time.perf_counter() - t0, outputs,
                         [w.message for w in caught])
    record.save(out / "run_record.json")
    return record
