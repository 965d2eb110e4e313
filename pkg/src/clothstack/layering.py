"""Layer canonicalization and inner-to-outer penetration removal.

Each layer mesh is un-posed onto the canonical body via inverse blend
skinning. Penetration removal then walks the stack inner to outer: every
vertex may move only along the line through its nearest body point in the
direction of that body face's normal. Non-garment vertices land on the
previous layer's surface; garment vertices trapped inside the previous
layer are pushed just outside it by the stack thickness; all other garment
vertices are left untouched.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geometry import (
    TriMesh,
    build_index,
    closest_points,
    contains_points,
    normals,
    ray_hits_padded,
    winding_numbers,
)
from .skinning import Pose, SkinnedBody, lbs_inverse, transfer_weights

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.002  # inter-layer thickness (meters)

# non-garment vertices closer than this to the previous surface count as
# already registered; re-running the pass then cannot teleport them through
# grazing crossings where the surfaces coincide
_ON_SURFACE_TOL = 1e-7


@dataclass
class Layer:
    """One garment layer in canonical pose with its labeled vertex set."""

    mesh: TriMesh
    garment_set: np.ndarray  # vertex indices belonging to the garment

    def __post_init__(self):
        idx = np.asarray(sorted(self.garment_set)
                         if isinstance(self.garment_set, set)
                         else self.garment_set, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.mesh.n_vertices):
            raise InvalidInputError("garment_set index out of range")
        self.garment_set = idx

    def garment_mask(self) -> np.ndarray:
        mask = np.zeros(self.mesh.n_vertices, dtype=bool)
        mask[self.garment_set] = True
        return mask


@dataclass
class LayerStack:
    """Ordered inner-to-outer garment layers over a canonical body."""

    body: SkinnedBody
    layers: list = field(default_factory=list)
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvalidInputError("epsilon must be positive")
        self.layers = [layer if isinstance(layer, Layer) else Layer(*layer)
                       for layer in self.layers]


def canonicalize_layer(mesh: TriMesh, body: SkinnedBody, pose: Pose) -> TriMesh:
    """Un-pose a captured layer mesh onto the canonical body.

    Weights are queried from the nearest body vertex in the posed space,
    then the blended per-vertex transform is inverted. Connectivity and
    labels are preserved.
    """
    from .skinning import lbs_forward

    posed_body = SkinnedBody(
        mesh=body.mesh.with_vertices(
            lbs_forward(body.mesh.vertices, body.weights, pose)),
        weights=body.weights, joints=body.joints)
    weights = transfer_weights(posed_body, mesh)
    return mesh.with_vertices(lbs_inverse(mesh.vertices, weights, pose))


def _check_watertight(index, label: str) -> None:
    """Probe the winding field far outside; warn when it strays from 0."""
    lo, hi = index.mesh.bounds()
    span = hi - lo
    probes = np.array([hi + 2.0 * span, lo - 2.0 * span,
                       hi + np.array([3.0, 0.1, 0.2]) * span])
    w = winding_numbers(index, probes)
    if np.any(np.abs(w) > 0.1):
        warnings.warn(f"{label} does not look watertight "
                      f"(far winding {w.max():.3f}); containment tests "
                      "may be unreliable")


def remove_penetrations(stack: LayerStack, check_watertight: bool = True) -> list:
    """Inner-to-outer vertex displacement pass (see module docstring).

    Returns the displaced layer meshes. Connectivity and labels are never
    modified and untouched vertices are bit-identical to their inputs.
    """
    body_mesh = stack.body.mesh
    body_index = build_index(body_mesh)
    body_face_normals, _ = normals(body_mesh)
    if check_watertight:
        _check_watertight(body_index, "body")

    results = []
    prev_index = body_index
    for k, layer in enumerate(stack.layers, start=1):
        verts = layer.mesh.vertices  # snapshot; displacements are independent
        b, bface, _ = closest_points(body_index, verts)
        n = body_face_normals[bface]

        t_pad, _f_pad, t_count = ray_hits_padded(prev_index, b, n)
        valid = np.arange(t_pad.shape[1])[None, :] < t_count[:, None]
        t_star = np.where(valid, t_pad, -np.inf).max(axis=1)
        has_hit = t_count > 0

        in_s = layer.garment_mask()
        contained = np.zeros(len(verts), dtype=bool)
        if in_s.any():
            contained[in_s] = contains_points(prev_index, verts[in_s])

        new_verts = verts.copy()

        # non-garment vertices land on the previous surface
        case_a = ~in_s
        on_prev = np.zeros(len(verts), dtype=bool)
        if case_a.any():
            _, _, d_prev = closest_points(prev_index, verts[case_a])
            on_prev[case_a] = d_prev <= _ON_SURFACE_TOL
        a_hit = case_a & ~on_prev & has_hit
        new_verts[a_hit] = b[a_hit] + t_star[a_hit, None] * n[a_hit]
        a_miss = case_a & ~on_prev & ~has_hit
        if a_miss.any():
            # line misses the previous layer: snap to its closest point
            cp, _, _ = closest_points(prev_index, verts[a_miss])
            new_verts[a_miss] = cp

        # trapped garment vertices go just outside the previous surface
        case_b = in_s & contained
        b_hit = case_b & has_hit
        new_verts[b_hit] = b[b_hit] + (t_star[b_hit] + stack.epsilon)[:, None] * n[b_hit]
        b_miss = case_b & ~has_hit
        if b_miss.any():
            # contained but the line found no crossing (grazing geometry):
            # offset from the body surface itself
            new_verts[b_miss] = b[b_miss] + stack.epsilon * n[b_miss]

        # case c: garment vertices already outside stay bit-identical

        log.debug("layer %d: %d on-surface, %d pushed out, %d untouched",
                  k, int(case_a.sum()), int(case_b.sum()),
                  int((in_s & ~contained).sum()))

        result = layer.mesh.with_vertices(new_verts)
        results.append(result)
        prev_index = build_index(result)
        if check_watertight:
            _check_watertight(prev_index, f"layer {k}")
    return results
