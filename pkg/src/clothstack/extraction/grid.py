"""Regular scalar grid sampling of a distance field."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, InvalidInputError

_GRID_MAGIC = b"CSGD"
_GRID_VERSION = 1


@dataclass
class ScalarGrid:
    """Cubic-cell node grid: value[i, j, k] sampled at origin + (i,j,k)*cell."""

    origin: np.ndarray
    cell: float
    values: np.ndarray  # (nx, ny, nz)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise InvalidInputError("grid needs at least 2 nodes per axis")
        if self.cell <= 0:
            raise InvalidInputError("cell size must be positive")

    @property
    def dims(self) -> tuple:
        return self.values.shape

    def node_positions(self) -> np.ndarray:
        """(nx*ny*nz, 3) node coordinates in C order."""
        nx, ny, nz = self.dims
        ij = np.stack(np.meshgrid(np.arange(nx), np.arange(ny),
                                  np.arange(nz), indexing="ij"), axis=-1)
        return self.origin + ij.reshape(-1, 3) * self.cell


def bake_grid(field, bounds, resolution: int, batch: int = 65536) -> ScalarGrid:
    """Sample `field` on a cubic-cell grid covering `bounds`.

    `field` is either a callable mapping (M, 3) points to (M,) values or an
    MlpUdf. `resolution` is the node count along the longest axis (>= 2);
    other axes get enough nodes to cover their extent at the same cell size.
    """
    if resolution < 2:
        raise InvalidInputError("resolution must be at least 2")
    lo = np.asarray(bounds[0], dtype=np.float64).reshape(3)
    hi = np.asarray(bounds[1], dtype=np.float64).reshape(3)
    if np.any(hi <= lo):
        raise InvalidInputError("bounds must have positive extent")

    if not callable(field):
        from ..udf.model import MlpUdf, udf_eval_many
        if not isinstance(field, MlpUdf):
            raise InvalidInputError("field must be callable or an MlpUdf")
        model = field
        field = lambda pts: udf_eval_many(model, pts)  # noqa: E731

    size = hi - lo
    cell = float(size.max()) / (resolution - 1)
    dims = np.maximum(np.ceil(size / cell).astype(int) + 1, 2)
    grid = ScalarGrid(origin=lo, cell=cell,
                      values=np.zeros(tuple(dims)))
    pos = grid.node_positions()
    flat = np.empty(len(pos))
    for s in range(0, len(pos), batch):
        flat[s:s + batch] = field(pos[s:s + batch])
    grid.values = flat.reshape(grid.dims)
    return grid


def save_grid(path, grid: ScalarGrid) -> None:
    """Debug dump: header (origin, cell, dims) then float32 values."""
    with open(path, "wb") as fh:
        fh.write(_GRID_MAGIC)
        fh.write(struct.pack("<I", _GRID_VERSION))
        fh.write(struct.pack("<3d", *grid.origin))
        fh.write(struct.pack("<d", grid.cell))
        fh.write(struct.pack("<3I", *grid.dims))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f4").tobytes())


def load_grid(path) -> ScalarGrid:
    with open(path, "rb") as fh:
        if fh.read(4) != _GRID_MAGIC:
            raise FormatError("not a grid dump (bad magic)", path=str(path))
        version, = struct.unpack("<I", fh.read(4))
        if version != _GRID_VERSION:
            raise FormatError(f"unsupported grid version {version}",
                              path=str(path))
        origin = struct.unpack("<3d", fh.read(24))
        cell, = struct.unpack("<d", fh.read(8))
        dims = struct.unpack("<3I", fh.read(12))
        count = dims[0] * dims[1] * dims[2]
        data = fh.read(4 * count)
        if len(data) != 4 * count:
            raise FormatError("truncated grid data", path=str(path))
    values = np.frombuffer(data, dtype="<f4").reshape(dims).astype(np.float64)
    return ScalarGrid(origin=np.asarray(origin), cell=cell, values=values)
