"""Indexed triangle mesh with optional per-vertex garment labels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DegenerateGeometryError, InvalidInputError


@dataclass
class TriMesh:
    """Triangle surface in meters.

    vertices: (V, 3) float64 positions
    faces:    (F, 3) integer vertex indices, counter-clockwise winding
    labels:   optional (V,) integer garment label, 0 = non-garment
    """

    vertices: np.ndarray
    faces: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise InvalidInputError("face index out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                bad = int(np.nonzero(
                    (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
                )[0][0])
                raise InvalidInputError(f"degenerate face {bad}: repeated vertex index")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64).reshape(-1)
            if len(self.labels) != len(self.vertices):
                raise InvalidInputError(
                    f"labels length {len(self.labels)} != vertex count {len(self.vertices)}"
                )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bounds(self):
        """(min, max) corners of the axis-aligned bounding box."""
        if not len(self.vertices):
            raise InvalidInputError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of face corner positions."""
        return self.vertices[self.faces]

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same connectivity and labels, new vertex positions."""
        v = np.asarray(vertices, dtype=np.float64)
        if v.shape != self.vertices.shape:
            raise InvalidInputError("vertex array shape mismatch")
        labels = None if self.labels is None else self.labels.copy()
        return TriMesh(v.copy(), self.faces.copy(), labels)

    def copy(self) -> "TriMesh":
        return self.with_vertices(self.vertices)


def face_areas(mesh: TriMesh) -> np.ndarray:
    tri = mesh.triangles()
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def normals(mesh: TriMesh, atol: float = 1e-14):
    """Per-face and per-vertex unit normals.

    Face normals follow the counter-clockwise winding. Vertex normals are
    area-weighted averages of incident face normals, renormalized.
    Raises DegenerateGeometryError naming the first zero-area face.
    """
    tri = mesh.triangles()
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norms = np.linalg.norm(cross, axis=1)
    if np.any(norms <= atol):
        bad = int(np.nonzero(norms <= atol)[0][0])
        raise DegenerateGeometryError(f"face {bad} has zero area", face=bad)
    face_n = cross / norms[:, None]

    # cross norms are 2x face area, so accumulating raw cross products
    # gives the area weighting for free
    vert_acc = np.zeros_like(mesh.vertices)
    for c in range(3):
        np.add.at(vert_acc, mesh.faces[:, c], cross)
    vlen = np.linalg.norm(vert_acc, axis=1)
    # isolated vertices (no incident face) keep a zero normal
    safe = vlen > atol
    vert_n = np.zeros_like(vert_acc)
    vert_n[safe] = vert_acc[safe] / vlen[safe, None]
    return face_n, vert_n


def sample_on_triangles(tri: np.ndarray, areas: np.ndarray, n: int, rng):
    """n area-uniform points on the given (F, 3, 3) triangles.

    Returns (points, triangle_row_indices). Zero-area triangles are never
    selected.
    """
    total = areas.sum()
    if total <= 0:
        raise InvalidInputError("no positive-area triangles to sample")
    faces = rng.choice(len(tri), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    t = tri[faces]
    pts = t[:, 0] + u[:, None] * (t[:, 1] - t[:, 0]) \
        + v[:, None] * (t[:, 2] - t[:, 0])
    return pts, faces


def sample_surface(mesh: TriMesh, n: int, rng):
    """Area-uniform surface samples: (points, face_ids)."""
    return sample_on_triangles(mesh.triangles(), face_areas(mesh), n, rng)


def submesh(mesh: TriMesh, vertex_set) -> TriMesh:
    """Faces whose three corners all lie in vertex_set, reindexed."""
    keep = np.zeros(mesh.n_vertices, dtype=bool)
    idx = np.fromiter(vertex_set, dtype=np.int64) \
        if not isinstance(vertex_set, np.ndarray) else vertex_set.astype(np.int64)
    if idx.size:
        if idx.min() < 0 or idx.max() >= mesh.n_vertices:
            raise InvalidInputError("vertex_set contains out-of-range indices")
        keep[idx] = True
    face_mask = keep[mesh.faces].all(axis=1)
    used = np.unique(mesh.faces[face_mask])
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    labels = None if mesh.labels is None else mesh.labels[used]
    return TriMesh(mesh.vertices[used], remap[mesh.faces[face_mask]], labels)


def vertex_adjacency(mesh: TriMesh):
    """CSR-style (offsets, neighbors) adjacency over mesh edges."""
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    edges = np.concatenate([edges, edges[:, ::-1]], axis=0)
    edges = np.unique(edges, axis=0)
    counts = np.bincount(edges[:, 0], minlength=mesh.n_vertices)
    offsets = np.zeros(mesh.n_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, edges[:, 1].copy()


def connected_components(mesh: TriMesh, vertex_set) -> list:
    """Partition vertex_set by edge-connectivity restricted to the set.

    Components are returned largest first; equal sizes order by smallest
    member index so the result is deterministic.
    """
    selected = np.zeros(mesh.n_vertices, dtype=bool)
    idx = np.fromiter(vertex_set, dtype=np.int64) if not isinstance(vertex_set, np.ndarray) \
        else vertex_set.astype(np.int64)
    if idx.size == 0:
        return []
    if idx.min() < 0 or idx.max() >= mesh.n_vertices:
        raise InvalidInputError("vertex_set contains out-of-range indices")
    selected[idx] = True

    offsets, neighbors = vertex_adjacency(mesh)
    visited = np.zeros(mesh.n_vertices, dtype=bool)
    components = []
    for start in np.sort(idx):
        if visited[start]:
            continue
        comp = []
        stack = [int(start)]
        visited[start] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for n in neighbors[offsets[v]:offsets[v + 1]]:
                if selected[n] and not visited[n]:
                    visited[n] = True
                    stack.append(int(n))
        components.append(set(comp))
    components.sort(key=lambda c: (-len(c), min(c)))
    return components
