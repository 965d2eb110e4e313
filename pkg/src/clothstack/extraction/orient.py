"""Back-face winding flip for double-sided shells.

For rendering, the outward-facing look of a single-sided garment is
recovered by flipping faces on the side of the shell facing away from an
orthographic camera: each vertex projects onto the view line through its
nearest body joint, and a face flips only when all three of its vertices
project sufficiently far behind.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from ..geometry import TriMesh

DEFAULT_XI = 0.005  # projection threshold (meters)


def back_vertex_flags(mesh: TriMesh, joints, view_dir,
                      xi: float = DEFAULT_XI) -> np.ndarray:
    """Per-vertex flag: projection onto (nearest joint + t * view_dir)
    exceeds xi."""
    joints = np.asarray(joints, dtype=np.float64).reshape(-1, 3)
    if len(joints) == 0:
        raise InvalidInputError("need at least one joint")
    d = np.asarray(view_dir, dtype=np.float64).reshape(3)
    n = np.linalg.norm(d)
    if n < 1e-12:
        raise InvalidInputError("view direction must be non-zero")
    d = d / n

    v = mesh.vertices
    # nearest joint, lowest index on ties (argmin keeps the first minimum)
    d2 = np.sum((v[:, None, :] - joints[None, :, :]) ** 2, axis=2)
    nearest = np.argmin(d2, axis=1)
    t_star = np.einsum("ij,j->i", v - joints[nearest], d)
    return t_star > xi


def orient_back_faces(mesh: TriMesh, joints, view_dir,
                      xi: float = DEFAULT_XI) -> TriMesh:
    """Reverse the winding of faces whose three vertices all flag as back.

    Only face windings change; vertex data and labels are untouched.
    Applying the operation twice restores the original mesh.
    """
    flip_v = back_vertex_flags(mesh, joints, view_dir, xi)
    flip_f = flip_v[mesh.faces].all(axis=1)
    faces = mesh.faces.copy()
    faces[flip_f] = faces[flip_f][:, ::-1]
    labels = None if mesh.labels is None else mesh.labels.copy()
    return TriMesh(mesh.vertices.copy(), faces, labels)
