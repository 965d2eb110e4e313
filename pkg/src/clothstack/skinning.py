"""Linear blend skinning: forward, inverse, and weight transfer.

A posed vertex is the weight-blended product of per-joint rigid bone
transforms applied to its rest position; un-posing inverts the blended
matrix per vertex. Weights for non-body meshes are copied from the
nearest body vertex.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError, SingularBlendError
from .geometry import TriMesh

_WEIGHTS_MAGIC = b"CSWT"
_WEIGHTS_VERSION = 1

# blended matrices with condition number at or above this raise instead of
# silently producing garbage
_COND_LIMIT = 1e8


def _check_weight_rows(weights: np.ndarray, tol: float = 1e-6) -> None:
    if np.any(weights < -tol):
        raise InvalidInputError("skinning weights must be non-negative")
    sums = weights.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise InvalidInputError(
            f"weight row {bad} sums to {sums[bad]:.8f}, expected 1")


@dataclass
class SkinnedBody:
    """Canonical-pose body mesh with per-vertex joint weights."""

    mesh: TriMesh
    weights: np.ndarray  # (V, J), rows sum to 1
    joints: np.ndarray | None = None  # optional (J, 3) rest joint positions

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[1] < 1:
            raise InvalidInputError("weights must be (V, J) with J >= 1")
        if len(self.weights) != self.mesh.n_vertices:
            raise InvalidInputError(
                f"weight rows {len(self.weights)} != vertex count "
                f"{self.mesh.n_vertices}")
        _check_weight_rows(self.weights)
        if self.joints is not None:
            self.joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 3)
            if len(self.joints) != self.joint_count:
                raise InvalidInputError("joint position count != J")

    @property
    def joint_count(self) -> int:
        return self.weights.shape[1]


@dataclass
class Pose:
    """Per-joint rigid 4x4 bone transforms."""

    bone_transforms: np.ndarray  # (J, 4, 4)

    def __post_init__(self):
        B = np.ascontiguousarray(self.bone_transforms, dtype=np.float64)
        if B.ndim != 3 or B.shape[1:] != (4, 4):
            raise InvalidInputError("bone_transforms must be (J, 4, 4)")
        R = B[:, :3, :3]
        eye = np.eye(3)
        for j in range(len(B)):
            if (np.abs(R[j] @ R[j].T - eye).max() > 1e-6
                    or abs(np.linalg.det(R[j]) - 1.0) > 1e-6):
                raise InvalidInputError(
                    f"joint {j}: rotation block is not a proper rotation")
            if np.abs(B[j, 3] - np.array([0, 0, 0, 1.0])).max() > 1e-9:
                raise InvalidInputError(f"joint {j}: last row must be 0 0 0 1")
        self.bone_transforms = B

    @property
    def joint_count(self) -> int:
        return len(self.bone_transforms)

    @classmethod
    def identity(cls, joint_count: int) -> "Pose":
        return cls(np.tile(np.eye(4), (joint_count, 1, 1)))


@dataclass
class WeightField:
    """Per-vertex joint weights attached to an arbitrary mesh."""

    weights: np.ndarray  # (N, J)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise InvalidInputError("weights must be (N, J)")
        _check_weight_rows(self.weights)

    @property
    def joint_count(self) -> int:
        return self.weights.shape[1]


def transfer_weights(body: SkinnedBody, mesh: TriMesh,
                     chunk: int = 512) -> WeightField:
    """Copy each mesh vertex's weights from its nearest body vertex.

    Ties break toward the lowest body-vertex index; rows are copied, never
    renormalized.
    """
    if body.mesh.n_vertices == 0:
        raise InvalidInputError("body mesh is empty")
    bv = body.mesh.vertices
    mv = mesh.vertices
    nearest = np.empty(len(mv), dtype=np.int64)
    for s in range(0, len(mv), chunk):
        block = mv[s:s + chunk]
        d2 = np.sum((block[:, None, :] - bv[None, :, :]) ** 2, axis=2)
        nearest[s:s + chunk] = np.argmin(d2, axis=1)  # argmin: lowest index wins
    return WeightField(body.weights[nearest].copy())


def _weights_array(weights) -> np.ndarray:
    if isinstance(weights, WeightField):
        return weights.weights
    return np.asarray(weights, dtype=np.float64)


def _blend_matrices(weights: np.ndarray, pose: Pose) -> np.ndarray:
    B = pose.bone_transforms
    if weights.shape[1] != len(B):
        raise InvalidInputError(
            f"weights have {weights.shape[1]} joints, pose has {len(B)}")
    return (weights @ B.reshape(len(B), 16)).reshape(-1, 4, 4)


def lbs_forward(points, weights, pose: Pose) -> np.ndarray:
    """Pose canonical points: p' = (sum_i w_i B_i) p."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    w = _weights_array(weights)
    if len(p) != len(w):
        raise InvalidInputError(
            f"{len(p)} points but {len(w)} weight rows")
    M = _blend_matrices(w, pose)
    return np.einsum("nij,nj->ni", M[:, :3, :3], p) + M[:, :3, 3]


def lbs_inverse(points, weights, pose: Pose) -> np.ndarray:
    """Un-pose points: p_c = (sum_i w_i B_i)^{-1} p."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    w = _weights_array(weights)
    if len(p) != len(w):
        raise InvalidInputError(
            f"{len(p)} points but {len(w)} weight rows")
    M = _blend_matrices(w, pose)
    cond = np.linalg.cond(M)
    if np.any(~np.isfinite(cond)) or np.any(cond >= _COND_LIMIT):
        bad = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise SingularBlendError(
            f"blended matrix for vertex {bad} is near-singular "
            f"(cond {cond[bad]:.3g})", vertex=bad)
    Minv = np.linalg.inv(M)
    return np.einsum("nij,nj->ni", Minv[:, :3, :3], p) + Minv[:, :3, 3]


# --------------------------------------------------------------- file I/O

def save_weights(path, weights: np.ndarray) -> None:
    """Binary weights file: magic, version, vertex count, J, float32 rows."""
    w = np.ascontiguousarray(weights, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_MAGIC)
        fh.write(struct.pack("<III", _WEIGHTS_VERSION, w.shape[0], w.shape[1]))
        fh.write(w.tobytes())


def load_weights(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _WEIGHTS_MAGIC:
            raise FormatError("not a weights file (bad magic)", path=str(path))
        version, nv, nj = struct.unpack("<III", fh.read(12))
        if version != _WEIGHTS_VERSION:
            raise FormatError(f"unsupported weights version {version}",
                              path=str(path))
        data = fh.read(4 * nv * nj)
        if len(data) != 4 * nv * nj:
            raise FormatError("truncated weights data", path=str(path))
    w = np.frombuffer(data, dtype="<f4").reshape(nv, nj).astype(np.float64)
    # float32 storage can drift row sums past the invariant; renormalize
    sums = w.sum(axis=1)
    if np.any(sums <= 0):
        raise FormatError("weight row sums to zero", path=str(path))
    return w / sums[:, None]


def load_skinned_body(mesh_path, weights_path, joints_path=None) -> SkinnedBody:
    from .geometry import load_mesh
    mesh = load_mesh(mesh_path)
    weights = load_weights(weights_path)
    joints = None
    if joints_path is not None:
        with open(joints_path, "r", encoding="utf-8") as fh:
            joints = np.asarray(json.load(fh), dtype=np.float64)
    return SkinnedBody(mesh=mesh, weights=weights, joints=joints)


def save_pose(path, pose: Pose) -> None:
    """Pose file: JSON array of J row-major 4x4 matrices."""
    data = [[[float(x) for x in row] for row in mat]
            for mat in pose.bone_transforms]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)


def load_pose(path) -> Pose:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad pose JSON: {exc}", path=str(path))
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 16:
        arr = arr.reshape(-1, 4, 4)
    if arr.ndim != 3 or arr.shape[1:] != (4, 4):
        raise FormatError("pose JSON must hold J 4x4 matrices", path=str(path))
    return Pose(arr)
