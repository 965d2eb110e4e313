"""Core triangle-mesh type, spatial queries, topology utilities, file I/O."""

from .bvh import (
    SpatialIndex,
    build_index,
    closest_point,
    closest_points,
    contains_point,
    contains_points,
    ray_hits_padded,
    ray_intersections,
    ray_intersections_many,
    unsigned_distance,
    unsigned_distances,
    winding_number,
    winding_numbers,
)
from .meshio import load_mesh, save_mesh
from .trimesh import TriMesh, connected_components, face_areas, normals, vertex_adjacency

__all__ = [
    "TriMesh",
    "SpatialIndex",
    "build_index",
    "closest_point",
    "closest_points",
    "contains_point",
    "contains_points",
    "connected_components",
    "face_areas",
    "load_mesh",
    "normals",
    "ray_hits_padded",
    "ray_intersections",
    "ray_intersections_many",
    "save_mesh",
    "unsigned_distance",
    "unsigned_distances",
    "vertex_adjacency",
    "winding_number",
    "winding_numbers",
]
