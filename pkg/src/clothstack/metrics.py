"""Evaluation metrics: Chamfer distance, normal consistency, and the
rendered intersection ratio.

Chamfer and normal consistency are symmetric means over area-uniform
surface samples; each mesh's sample stream is seeded from a content hash
so swapping the arguments gives bit-identical results. The intersection
ratio renders the outer garment alone and stacked with everything beneath
it from front and back orthographic views and reports the fraction of its
visible area lost to occlusion.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, UndefinedMetricError
from .geometry import TriMesh, build_index, closest_points
from .geometry.trimesh import face_areas, sample_on_triangles
from .rasterview import Camera, look_at_camera, render_buffers

DEFAULT_CD_SAMPLES = 100_000
DEFAULT_IR_RESOLUTION = 1024
_FRAME_MARGIN = 1.05


@dataclass
class MetricReport:
    chamfer_mm: float | None = None
    normal_consistency: float | None = None
    intersection_ratio_percent: float | None = None
    per_layer: list = field(default_factory=list)
    sample_count: int = 0
    resolution: int = 0
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "chamfer_mm": self.chamfer_mm,
            "normal_consistency": self.normal_consistency,
            "intersection_ratio_percent": self.intersection_ratio_percent,
            "per_layer": self.per_layer,
            "sample_count": self.sample_count,
            "resolution": self.resolution,
            "seed": self.seed,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "MetricReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))


def _mesh_seed(mesh: TriMesh, seed: int) -> np.random.Generator:
    """Content-keyed RNG so a mesh gets identical samples in any argument
    position."""
    h = hashlib.blake2b(digest_size=8)
    h.update(np.ascontiguousarray(mesh.vertices).tobytes())
    h.update(np.ascontiguousarray(mesh.faces).tobytes())
    key = int.from_bytes(h.digest(), "little")
    return np.random.default_rng(np.random.SeedSequence([seed, key]))


def _safe_face_normals(mesh: TriMesh):
    """(normals, areas); zero-area faces get a zero normal and zero area."""
    tri = mesh.triangles()
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norms = np.linalg.norm(cross, axis=1)
    safe = norms > 1e-14
    n = np.zeros_like(cross)
    n[safe] = cross[safe] / norms[safe, None]
    return n, 0.5 * norms


def chamfer_distance(a: TriMesh, b: TriMesh,
                     n_samples: int = DEFAULT_CD_SAMPLES,
                     seed: int = 0) -> float:
    """Symmetric mean point-to-surface distance in millimeters."""
    if a.n_faces == 0 or b.n_faces == 0:
        raise InvalidInputError("chamfer_distance needs non-empty meshes")
    pts_a, _ = sample_on_triangles(a.triangles(), face_areas(a), n_samples,
                                   _mesh_seed(a, seed))
    pts_b, _ = sample_on_triangles(b.triangles(), face_areas(b), n_samples,
                                   _mesh_seed(b, seed))
    _, _, d_ab = closest_points(build_index(b), pts_a)
    _, _, d_ba = closest_points(build_index(a), pts_b)
    return float(0.5 * (d_ab.mean() + d_ba.mean()) * 1000.0)


def normal_consistency(a: TriMesh, b: TriMesh,
                       n_samples: int = DEFAULT_CD_SAMPLES,
                       seed: int = 0) -> float:
    """Symmetric mean absolute normal cosine between closest-point pairs.

    The absolute value makes the metric winding-agnostic, which double-sided
    shells require. Degenerate faces are excluded from sampling.
    """
    if a.n_faces == 0 or b.n_faces == 0:
        raise InvalidInputError("normal_consistency needs non-empty meshes")
    na, area_a = _safe_face_normals(a)
    nb, area_b = _safe_face_normals(b)
    pts_a, fid_a = sample_on_triangles(a.triangles(), area_a, n_samples,
                                       _mesh_seed(a, seed))
    pts_b, fid_b = sample_on_triangles(b.triangles(), area_b, n_samples,
                                       _mesh_seed(b, seed))
    _, hit_b, _ = closest_points(build_index(b), pts_a)
    _, hit_a, _ = closest_points(build_index(a), pts_b)
    cos_ab = np.abs(np.einsum("ij,ij->i", na[fid_a], nb[hit_b]))
    cos_ba = np.abs(np.einsum("ij,ij->i", nb[fid_b], na[hit_a]))
    return float(0.5 * (cos_ab.mean() + cos_ba.mean()))


def front_back_cameras(meshes, resolution: int = DEFAULT_IR_RESOLUTION,
                       margin: float = _FRAME_MARGIN):
    """Orthographic front (-z view direction) and back (+z) cameras framing
    the combined bounding box with a margin, y up."""
    los = np.vstack([m.bounds()[0] for m in meshes])
    his = np.vstack([m.bounds()[1] for m in meshes])
    lo, hi = los.min(axis=0), his.max(axis=0)
    center = 0.5 * (lo + hi)
    size = hi - lo
    extent = float(max(size[0], size[1])) * margin
    if extent <= 0:
        raise InvalidInputError("scene has zero extent")
    standoff = float(size[2]) + extent
    front = look_at_camera(center + [0.0, 0.0, standoff], center,
                           mode="orthographic",
                           resolution=(resolution, resolution), extent=extent)
    back = look_at_camera(center - [0.0, 0.0, standoff], center,
                          mode="orthographic",
                          resolution=(resolution, resolution), extent=extent)
    return front, back


def intersection_ratio(outer: TriMesh, inner_stack,
                       resolution: int = DEFAULT_IR_RESOLUTION,
                       seed: int = 0, cameras=None,
                       return_buffers: bool = False):
    """Percentage of the outer mesh's rendered area occluded by the stack.

    A = outer's visible pixels rendered alone (front plus back views);
    A_hat = pixels where outer is still the nearest surface when rendered
    with every inner mesh; result is 100 * (A - A_hat) / A.
    """
    inner = list(inner_stack)
    if cameras is None:
        cameras = front_back_cameras([outer] + inner, resolution)
    area_alone = 0
    area_stacked = 0
    buffers = []
    for cam in cameras:
        alone = render_buffers([outer], cam)
        stacked = render_buffers([outer] + inner, cam)
        area_alone += int((alone.mesh_id == 0).sum())
        area_stacked += int((stacked.mesh_id == 0).sum())
        if return_buffers:
            buffers.append((alone, stacked))
    if area_alone == 0:
        raise UndefinedMetricError(
            "outer mesh is not visible from either view (A = 0)")
    ir = 100.0 * (area_alone - area_stacked) / area_alone
    if return_buffers:
        return ir, buffers
    return ir
