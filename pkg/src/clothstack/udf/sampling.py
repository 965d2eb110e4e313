"""Three-category training point sampler for distance-field fitting.

Points come from (1) the labeled garment faces themselves, (2) the same
surface jittered by isotropic Gaussian noise, and (3) the inflated mesh
bounding box. Candidates whose closest point on the full mesh falls on a
face that is not entirely labeled are discarded and replaced, so the
supervision never leaks distance to non-garment geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, SamplingStarvationError
from ..geometry import SpatialIndex, TriMesh, build_index, closest_points, face_areas

ON_SURFACE = 0
NEAR_SURFACE = 1
BOX = 2

_OVERSAMPLE_CAP = 100  # per category, times the requested count
_BOX_INFLATE = 0.10


@dataclass
class SampleSet:
    points: np.ndarray    # (M, 3)
    gt: np.ndarray        # (M,) unsigned distances, >= 0
    category: np.ndarray  # (M,) ON_SURFACE | NEAR_SURFACE | BOX

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.gt = np.asarray(self.gt, dtype=np.float64).reshape(-1)
        self.category = np.asarray(self.category, dtype=np.int8).reshape(-1)
        if not (len(self.points) == len(self.gt) == len(self.category)):
            raise InvalidInputError("sample arrays must have equal length")
        if np.any(self.gt < 0):
            raise InvalidInputError("ground-truth distances must be >= 0")
        if np.any(self.gt[self.category == ON_SURFACE] != 0.0):
            raise InvalidInputError("on-surface samples must have gt = 0")

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.points[idx], self.gt[idx], self.category[idx])


def _surface_points(rng, tri, areas, n):
    """n area-uniform points on the given triangles."""
    probs = areas / areas.sum()
    faces = rng.choice(len(tri), size=n, p=probs)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    t = tri[faces]
    return t[:, 0] + u[:, None] * (t[:, 1] - t[:, 0]) + v[:, None] * (t[:, 2] - t[:, 0])


def sample_training_points(mesh: TriMesh, garment_set, counts,
                           sigma: float = 0.01, seed: int = 0,
                           index: SpatialIndex | None = None) -> SampleSet:
    """Build a SampleSet of (on-surface, near-surface, box) points.

    counts: (n_surface, n_near, n_box). Near-surface noise is Gaussian with
    std sigma per axis. Raises SamplingStarvationError when a category
    cannot be filled within the oversampling cap.
    """
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or any(c < 0 for c in counts):
        raise InvalidInputError("counts must be three non-negative integers")

    garment = np.asarray(sorted(garment_set) if isinstance(garment_set, set)
                         else garment_set, dtype=np.int64).reshape(-1)
    if garment.size == 0:
        raise InvalidInputError("garment set is empty")
    in_s = np.zeros(mesh.n_vertices, dtype=bool)
    in_s[garment] = True
    s_faces = np.nonzero(in_s[mesh.faces].all(axis=1))[0]
    if s_faces.size == 0:
        raise InvalidInputError("no face has all three vertices labeled")

    tri_s = mesh.triangles()[s_faces]
    areas_s = face_areas(mesh)[s_faces]
    if index is None:
        index = build_index(mesh)
    s_face_mask = np.zeros(mesh.n_faces, dtype=bool)
    s_face_mask[s_faces] = True

    rng = np.random.default_rng(seed)
    lo, hi = mesh.bounds()
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * (1.0 + _BOX_INFLATE)

    def filtered(candidates):
        """Keep candidates whose closest mesh point lies on a labeled face;
        returns (points, distances)."""
        _, fid, dist = closest_points(index, candidates)
        keep = s_face_mask[fid]
        return candidates[keep], dist[keep]

    def fill(n, generate, label):
        pts = np.empty((0, 3))
        dists = np.empty(0)
        generated = 0
        while len(pts) < n:
            want = max(n - len(pts), 32)
            cand = generate(want)
            generated += want
            good, d = filtered(cand)
            pts = np.concatenate([pts, good])
            dists = np.concatenate([dists, d])
            if generated > _OVERSAMPLE_CAP * max(n, 1):
                raise SamplingStarvationError(
                    f"{label}: {len(pts)}/{n} samples after "
                    f"{generated} candidates")
        return pts[:n], dists[:n]

    n_surf, n_near, n_box = counts
    surf_pts = _surface_points(rng, tri_s, areas_s, n_surf)

    near_pts, near_d = fill(
        n_near,
        lambda m: _surface_points(rng, tri_s, areas_s, m)
        + rng.normal(scale=sigma, size=(m, 3)),
        "near-surface")

    box_pts, box_d = fill(
        n_box,
        lambda m: center + rng.uniform(-1.0, 1.0, size=(m, 3)) * half,
        "box")

    points = np.concatenate([surf_pts, near_pts, box_pts])
    gt = np.concatenate([np.zeros(n_surf), near_d, box_d])
    category = np.concatenate([
        np.full(n_surf, ON_SURFACE, dtype=np.int8),
        np.full(n_near, NEAR_SURFACE, dtype=np.int8),
        np.full(n_box, BOX, dtype=np.int8)])
    return SampleSet(points, gt, category)
