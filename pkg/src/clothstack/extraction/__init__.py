"""Scalar-grid baking, marching cubes, and shell orientation."""

from .grid import ScalarGrid, bake_grid, load_grid, save_grid
from .marching import marching_cubes
from .orient import DEFAULT_XI, back_vertex_flags, orient_back_faces

__all__ = [
    "DEFAULT_XI",
    "ScalarGrid",
    "back_vertex_flags",
    "bake_grid",
    "load_grid",
    "marching_cubes",
    "orient_back_faces",
    "save_grid",
]
