"""Marching cubes over a scalar grid.

Vectorized over active cubes with deterministic global-edge vertex
welding, so identical grids always produce identical meshes. Triangles
are oriented so normals point toward increasing field values, which for
an unsigned distance field means outward from the extracted shell.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import InvalidInputError
from ..geometry import TriMesh
from ._tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE
from .grid import ScalarGrid

# per-edge axis and base-node offset for global edge keys
_EDGE_AXIS = np.empty(12, dtype=np.int64)
_EDGE_BASE = np.empty((12, 3), dtype=np.int64)
for _e in range(12):
    _c0, _c1 = EDGE_CORNERS[_e]
    _o0, _o1 = CORNER_OFFSETS[_c0], CORNER_OFFSETS[_c1]
    _EDGE_AXIS[_e] = int(np.nonzero(_o0 != _o1)[0][0])
    _EDGE_BASE[_e] = np.minimum(_o0, _o1)


def marching_cubes(grid: ScalarGrid, tau: float) -> TriMesh:
    """Triangulate the level set {field = tau}.

    Vertices are linearly interpolated along cut edges. An empty level set
    yields an empty mesh (with a warning), not an error.
    """
    values = grid.values
    nx, ny, nz = grid.dims
    below = values < tau

    cube_cfg = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for ci in range(8):
        dx, dy, dz = CORNER_OFFSETS[ci]
        cube_cfg |= (below[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz]
                     .astype(np.int64) << ci)

    ax, ay, az = np.nonzero(EDGE_TABLE[cube_cfg] != 0)
    if len(ax) == 0:
        warnings.warn(f"level set at {tau} is empty; returning an empty mesh")
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    cfg = cube_cfg[ax, ay, az]

    # global edge key per (active cube, local edge)
    base = np.stack([ax, ay, az], axis=1)[:, None, :] + _EDGE_BASE[None, :, :]
    key = (((_EDGE_AXIS[None, :] * nx + base[:, :, 0]) * ny
            + base[:, :, 1]) * nz + base[:, :, 2])

    tri_edges = TRI_TABLE[cfg]  # (m, 16)
    corner_keys = []
    for s in range(0, 15, 3):
        e0 = tri_edges[:, s]
        valid = e0 >= 0
        if not valid.any():
            continue
        rows = np.nonzero(valid)[0]
        tri = np.stack([key[rows, tri_edges[rows, s + c]] for c in range(3)],
                       axis=1)
        corner_keys.append(tri)
    corner_keys = np.concatenate(corner_keys, axis=0)

    unique_keys, inverse = np.unique(corner_keys.reshape(-1),
                                     return_inverse=True)
    faces = inverse.reshape(-1, 3)

    # decode keys back to (axis, base node) and interpolate positions
    axis = unique_keys // (nx * ny * nz)
    rem = unique_keys % (nx * ny * nz)
    bx = rem // (ny * nz)
    by = (rem // nz) % ny
    bz = rem % nz
    n0 = np.stack([bx, by, bz], axis=1)
    n1 = n0.copy()
    n1[np.arange(len(n1)), axis] += 1
    v0 = values[n0[:, 0], n0[:, 1], n0[:, 2]]
    v1 = values[n1[:, 0], n1[:, 1], n1[:, 2]]
    denom = v1 - v0
    t = np.where(denom != 0.0, (tau - v0) / np.where(denom == 0, 1.0, denom),
                 0.5)
    t = np.clip(t, 0.0, 1.0)
    verts = grid.origin + (n0 + t[:, None] * (n1 - n0)) * grid.cell

    # the tables wind triangles CCW seen from the below-threshold side;
    # flip so normals face the increasing-value side
    faces = faces[:, ::-1]

    # degenerate (repeated-vertex) triangles can appear when the level set
    # passes exactly through nodes; drop them
    f = faces
    keep = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    return TriMesh(verts, faces[keep])
