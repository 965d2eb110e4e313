"""Bounding-volume hierarchy over triangle meshes.

Median-split BVH with contiguous leaf ranges. Every node also carries an
area-weighted normal dipole (centroid, summed area normal, radius) so
generalized winding numbers can be evaluated with a far-field approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from . import _kernels
from ._kernels import RAY_EPS_T
from .trimesh import TriMesh

_LEAF_SIZE = 8

# far-field cutoff: nodes beyond this many radii use the dipole term
_WINDING_BETA = 4.0

# winding values this close to 0.5 are re-evaluated exactly
_WINDING_AMBIG = 0.3


@dataclass
class SpatialIndex:
    """Immutable face hierarchy for one mesh. Safe for concurrent queries."""

    mesh: TriMesh
    tri: np.ndarray        # (F, 3, 3) face corner positions
    perm: np.ndarray       # (F,) face ids in leaf order
    bmin: np.ndarray       # (M, 3) per-node bounds
    bmax: np.ndarray
    left: np.ndarray       # (M,) child index, -1 for leaves
    right: np.ndarray
    start: np.ndarray      # (M,) leaf range into perm
    count: np.ndarray
    centroid: np.ndarray   # (M, 3) area-weighted face centroid per node
    anormal: np.ndarray    # (M, 3) summed area-weighted normals per node
    radius: np.ndarray     # (M,) max vertex distance from node centroid

    @property
    def n_faces(self) -> int:
        return len(self.tri)


def build_index(mesh: TriMesh) -> SpatialIndex:
    """Build the face hierarchy for the mesh's current vertex positions."""
    if mesh.n_faces == 0:
        raise InvalidInputError("cannot index an empty mesh")
    tri = np.ascontiguousarray(mesh.triangles())
    n = len(tri)
    face_centroid = tri.mean(axis=1)
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    face_anormal = 0.5 * cross
    face_area = np.linalg.norm(face_anormal, axis=1)

    order = np.arange(n, dtype=np.int64)
    # median splits keep every leaf at >= _LEAF_SIZE/2 faces
    max_nodes = n + 3
    bmin = np.empty((max_nodes, 3))
    bmax = np.empty((max_nodes, 3))
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    start = np.zeros(max_nodes, dtype=np.int64)
    count = np.zeros(max_nodes, dtype=np.int64)

    n_nodes = 1
    stack = [(0, n, 0)]
    while stack:
        s, e, node = stack.pop()
        ids = order[s:e]
        pts = tri[ids].reshape(-1, 3)
        bmin[node] = pts.min(axis=0)
        bmax[node] = pts.max(axis=0)
        start[node] = s
        count[node] = e - s
        if e - s <= _LEAF_SIZE:
            continue
        cen = face_centroid[ids]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        # lexsort keeps the split deterministic when centroids coincide
        key = np.lexsort((ids, cen[:, axis]))
        order[s:e] = ids[key]
        mid = (s + e) // 2
        l, r = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node] = l
        right[node] = r
        stack.append((s, mid, l))
        stack.append((mid, e, r))

    bmin = bmin[:n_nodes].copy()
    bmax = bmax[:n_nodes].copy()
    left = left[:n_nodes].copy()
    right = right[:n_nodes].copy()
    start = start[:n_nodes].copy()
    count = count[:n_nodes].copy()

    # dipole data; leaf ranges are contiguous so prefix sums cover every node
    p_area = face_area[order]
    p_awc = face_area[order, None] * face_centroid[order]
    p_an = face_anormal[order]
    cum_area = np.concatenate([[0.0], np.cumsum(p_area)])
    cum_awc = np.vstack([np.zeros(3), np.cumsum(p_awc, axis=0)])
    cum_an = np.vstack([np.zeros(3), np.cumsum(p_an, axis=0)])

    node_centroid = np.empty((n_nodes, 3))
    node_anormal = np.empty((n_nodes, 3))
    node_radius = np.empty(n_nodes)
    for i in range(n_nodes):
        s, e = start[i], start[i] + count[i]
        area = cum_area[e] - cum_area[s]
        if area > 0.0:
            node_centroid[i] = (cum_awc[e] - cum_awc[s]) / area
        else:
            node_centroid[i] = 0.5 * (bmin[i] + bmax[i])
        node_anormal[i] = cum_an[e] - cum_an[s]
        verts = tri[order[s:e]].reshape(-1, 3)
        node_radius[i] = np.sqrt(
            np.max(np.sum((verts - node_centroid[i]) ** 2, axis=1)))

    return SpatialIndex(mesh=mesh, tri=tri, perm=order,
                        bmin=bmin, bmax=bmax, left=left, right=right,
                        start=start, count=count,
                        centroid=node_centroid, anormal=node_anormal,
                        radius=node_radius)


def _as_points(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    return np.ascontiguousarray(q.reshape(-1, 3)), single


def closest_points(index: SpatialIndex, queries):
    """Batch nearest-point query: (points, face_ids, distances)."""
    q, single = _as_points(queries)
    pts = np.empty_like(q)
    faces = np.empty(len(q), dtype=np.int64)
    dists = np.empty(len(q))
    _kernels.closest_points(index.bmin, index.bmax, index.left, index.right,
                            index.start, index.count, index.perm, index.tri,
                            q, pts, faces, dists)
    if single:
        return pts[0], int(faces[0]), float(dists[0])
    return pts, faces, dists


def closest_point(index: SpatialIndex, q):
    """Nearest point on the mesh: (point, face_id, distance)."""
    return closest_points(index, np.asarray(q, dtype=np.float64).reshape(3))


def unsigned_distances(index: SpatialIndex, queries):
    q, single = _as_points(queries)
    _, _, d = closest_points(index, q)
    return float(d[0]) if single else d


def unsigned_distance(index: SpatialIndex, q) -> float:
    """Distance from q to the mesh surface (non-negative)."""
    return unsigned_distances(index, np.asarray(q, dtype=np.float64).reshape(3))


def ray_intersections_many(index: SpatialIndex, origins, dirs, eps_t=RAY_EPS_T):
    """All crossings per ray, each a (t, face_id) list sorted by t."""
    o, _ = _as_points(origins)
    d, _ = _as_points(dirs)
    if o.shape != d.shape:
        raise InvalidInputError("origins and directions must pair up")
    lens = np.linalg.norm(d, axis=1)
    if np.any(lens < 1e-12):
        raise InvalidInputError("zero-length ray direction")
    d = d / lens[:, None]

    out_t, out_f, out_n = ray_hits_padded(index, o, d, eps_t=eps_t)
    results = []
    for i in range(len(o)):
        n = out_n[i]
        idx = np.lexsort((out_f[i, :n], out_t[i, :n]))
        results.append(list(zip(out_t[i, :n][idx].tolist(),
                                out_f[i, :n][idx].tolist())))
    return results


def ray_hits_padded(index: SpatialIndex, origins, dirs, eps_t=RAY_EPS_T,
                    cap=32):
    """Unsorted crossings as padded (t, face, count) arrays.

    Rays that overflow the capacity are re-run with enough room, so counts
    are always exact and every hit is present.
    """
    o, _ = _as_points(origins)
    d, _ = _as_points(dirs)
    out_t = np.empty((len(o), cap))
    out_f = np.empty((len(o), cap), dtype=np.int64)
    out_n = np.empty(len(o), dtype=np.int64)
    _kernels.ray_all_hits(index.bmin, index.bmax, index.left, index.right,
                          index.start, index.count, index.perm, index.tri,
                          o, d, eps_t, out_t, out_f, out_n)
    if np.any(out_n > cap):
        big = int(out_n.max()) + 8
        return ray_hits_padded(index, o, d, eps_t=eps_t, cap=big)
    return out_t, out_f, out_n


def ray_intersections(index: SpatialIndex, origin, direction):
    """Sorted list of (t, face_id) crossings with t > 1e-7 along a unit ray."""
    return ray_intersections_many(index,
                                  np.asarray(origin, dtype=np.float64).reshape(1, 3),
                                  np.asarray(direction, dtype=np.float64).reshape(1, 3))[0]


def winding_numbers(index: SpatialIndex, queries, beta=_WINDING_BETA,
                    exact=False):
    """Generalized winding number per query point."""
    q, single = _as_points(queries)
    w = np.empty(len(q))
    if exact:
        _kernels.winding_numbers_exact(index.tri, q, w)
    else:
        _kernels.winding_numbers(index.bmin, index.bmax, index.left,
                                 index.right, index.start, index.count,
                                 index.perm, index.tri, index.centroid,
                                 index.anormal, index.radius, q, beta, w)
        # near the 0.5 decision boundary the dipole error could flip the
        # call; re-evaluate those few points exactly
        ambig = np.nonzero(np.abs(w - 0.5) < _WINDING_AMBIG)[0]
        if len(ambig):
            w_exact = np.empty(len(ambig))
            _kernels.winding_numbers_exact(index.tri,
                                           np.ascontiguousarray(q[ambig]),
                                           w_exact)
            w[ambig] = w_exact
    return float(w[0]) if single else w


def winding_number(index: SpatialIndex, q) -> float:
    return winding_numbers(index, np.asarray(q, dtype=np.float64).reshape(3))


def contains_points(index: SpatialIndex, queries):
    """Watertight containment: winding number > 0.5."""
    q, single = _as_points(queries)
    inside = winding_numbers(index, q) > 0.5
    return bool(inside[0]) if single else inside


def contains_point(index: SpatialIndex, q) -> bool:
    return contains_points(index, np.asarray(q, dtype=np.float64).reshape(3))
