"""Deterministic software rasterizer plus the label voting pipeline.

Depth and face-id buffers drive both multi-view label transfer (project
vertices, check visibility against the depth buffer, majority-vote over
views) and the rendered intersection-ratio metric. Rasterization uses
pixel-center sampling with a fixed top/left tie rule, so identical inputs
always produce bit-identical buffers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError, UsageError
from .geometry import TriMesh, connected_components, vertex_adjacency

# vertex visibility slack against the depth buffer (meters)
TAU_VIS = 0.005

# perspective faces touching z_cam >= -_NEAR are culled
_NEAR = 1e-6


@dataclass
class Camera:
    """Orthographic or perspective pinhole looking along -z in camera space."""

    mode: str                 # "orthographic" | "perspective"
    extrinsic: np.ndarray     # (4, 4) rigid world -> camera
    resolution: tuple         # (width, height) pixels
    extent: float | None = None   # vertical view size in meters (orthographic)
    fov: float | None = None      # vertical field of view in radians (perspective)

    def __post_init__(self):
        if self.mode not in ("orthographic", "perspective"):
            raise InvalidInputError(f"unknown camera mode {self.mode!r}")
        self.extrinsic = np.asarray(self.extrinsic, dtype=np.float64).reshape(4, 4)
        w, h = self.resolution
        if w < 1 or h < 1:
            raise InvalidInputError("resolution must be at least 1x1")
        self.resolution = (int(w), int(h))
        if self.mode == "orthographic":
            if self.extent is None or self.extent <= 0:
                raise InvalidInputError("orthographic camera needs extent > 0")
        else:
            if self.fov is None or not (0 < self.fov < math.pi):
                raise InvalidInputError("perspective camera needs fov in (0, pi)")

    @property
    def aspect(self) -> float:
        return self.resolution[0] / self.resolution[1]

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        R = self.extrinsic[:3, :3]
        t = self.extrinsic[:3, 3]
        return p @ R.T + t

    def project(self, points: np.ndarray):
        """Screen-space float pixel coordinates plus per-point depth.

        Pixel (i, j) has its center at coordinate (i, j); row 0 is the top.
        """
        cam = self.world_to_camera(points)
        depth = -cam[:, 2]
        w, h = self.resolution
        if self.mode == "orthographic":
            half_h = 0.5 * self.extent
            half_w = half_h * self.aspect
            xn = cam[:, 0] / half_w
            yn = cam[:, 1] / half_h
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                slope = math.tan(0.5 * self.fov)
                xn = cam[:, 0] / (depth * slope * self.aspect)
                yn = cam[:, 1] / (depth * slope)
        px = (xn + 1.0) * 0.5 * w - 0.5
        py = (1.0 - yn) * 0.5 * h - 0.5
        return px, py, depth

    def pixel_ray(self, ix: float, iy: float):
        """World-space (origin, unit direction) through a pixel center."""
        w, h = self.resolution
        xn = (ix + 0.5) / w * 2.0 - 1.0
        yn = 1.0 - (iy + 0.5) / h * 2.0
        R = self.extrinsic[:3, :3]
        t = self.extrinsic[:3, 3]
        cam_origin = -R.T @ t
        if self.mode == "orthographic":
            half_h = 0.5 * self.extent
            origin_cam = np.array([xn * half_h * self.aspect, yn * half_h, 0.0])
            dir_cam = np.array([0.0, 0.0, -1.0])
        else:
            slope = math.tan(0.5 * self.fov)
            origin_cam = np.zeros(3)
            dir_cam = np.array([xn * slope * self.aspect, yn * slope, -1.0])
            dir_cam /= np.linalg.norm(dir_cam)
        origin = R.T @ (origin_cam - t)
        direction = R.T @ dir_cam
        return origin, direction

    def to_json(self) -> dict:
        out = {"mode": self.mode,
               "extrinsic": [float(x) for x in self.extrinsic.reshape(-1)],
               "resolution": list(self.resolution)}
        if self.mode == "orthographic":
            out["extent"] = float(self.extent)
        else:
            out["fov"] = float(self.fov)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Camera":
        return cls(mode=data["mode"],
                   extrinsic=np.asarray(data["extrinsic"],
                                        dtype=np.float64).reshape(4, 4),
                   resolution=tuple(data["resolution"]),
                   extent=data.get("extent"), fov=data.get("fov"))


@dataclass
class RenderBuffers:
    """Per-pixel depth (+inf background), face id, and mesh id (-1 background)."""

    depth: np.ndarray
    face_id: np.ndarray
    mesh_id: np.ndarray


@dataclass
class LabelMask:
    """Per-pixel garment/not flag for one camera."""

    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask).astype(bool)
        if self.mask.ndim != 2:
            raise InvalidInputError("mask must be 2-D")


def look_at_camera(position, target, mode="perspective", up=(0.0, 1.0, 0.0),
                   resolution=(256, 256), extent=None, fov=None) -> Camera:
    """Camera at `position` looking at `target` with the given up hint."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - position
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise InvalidInputError("camera position coincides with target")
    fwd = fwd / n
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        # view direction parallel to up; pick any orthogonal frame
        right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
        rn = np.linalg.norm(right)
        if rn < 1e-9:
            right = np.cross(fwd, np.array([0.0, 0.0, 1.0]))
            rn = np.linalg.norm(right)
    right /= rn
    cam_up = np.cross(right, fwd)
    R = np.stack([right, cam_up, -fwd], axis=0)
    ext = np.eye(4)
    ext[:3, :3] = R
    ext[:3, 3] = -R @ position
    return Camera(mode=mode, extrinsic=ext, resolution=resolution,
                  extent=extent, fov=fov)


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def render_buffers(meshes, camera: Camera) -> RenderBuffers:
    """Z-buffer rasterization of one or more meshes.

    Every covered pixel records the nearest face along its view ray.
    Faces are rasterized double-sided; coverage at exact edge crossings
    follows a fixed top/left rule so output is deterministic.
    """
    if isinstance(meshes, TriMesh):
        meshes = [meshes]
    if not meshes:
        raise InvalidInputError("render_buffers needs at least one mesh")
    w, h = camera.resolution
    depth = np.full((h, w), np.inf)
    face_id = np.full((h, w), -1, dtype=np.int64)
    mesh_id = np.full((h, w), -1, dtype=np.int64)

    persp = camera.mode == "perspective"
    for mi, mesh in enumerate(meshes):
        if mesh.n_faces == 0:
            continue
        px, py, d = camera.project(mesh.vertices)
        # perspective interpolates 1/depth linearly in screen space
        inv_d = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), np.inf) if persp else None
        cam_z = camera.world_to_camera(mesh.vertices)[:, 2]
        for fi in range(mesh.n_faces):
            i0, i1, i2 = mesh.faces[fi]
            if persp and (cam_z[i0] >= -_NEAR or cam_z[i1] >= -_NEAR
                          or cam_z[i2] >= -_NEAR):
                continue
            x0, y0 = px[i0], py[i0]
            x1, y1 = px[i1], py[i1]
            x2, y2 = px[i2], py[i2]
            area = _edge(x0, y0, x1, y1, x2, y2)
            if area == 0.0:
                continue
            xmin = max(int(math.ceil(min(x0, x1, x2))), 0)
            xmax = min(int(math.floor(max(x0, x1, x2))), w - 1)
            ymin = max(int(math.ceil(min(y0, y1, y2))), 0)
            ymax = min(int(math.floor(max(y0, y1, y2))), h - 1)
            if xmin > xmax or ymin > ymax:
                continue
            gx, gy = np.meshgrid(np.arange(xmin, xmax + 1),
                                 np.arange(ymin, ymax + 1))
            e0 = _edge(x1, y1, x2, y2, gx, gy)
            e1 = _edge(x2, y2, x0, y0, gx, gy)
            e2 = _edge(x0, y0, x1, y1, gx, gy)
            if area < 0.0:
                e0, e1, e2, sarea = -e0, -e1, -e2, -area
            else:
                sarea = area
            cover = (_covers(e0, x2 - x1, y2 - y1)
                     & _covers(e1, x0 - x2, y0 - y2)
                     & _covers(e2, x1 - x0, y1 - y0))
            if not cover.any():
                continue
            l0 = e0 / sarea
            l1 = e1 / sarea
            l2 = e2 / sarea
            if persp:
                inv = l0 * inv_d[i0] + l1 * inv_d[i1] + l2 * inv_d[i2]
                with np.errstate(divide="ignore"):
                    pix_d = 1.0 / inv
            else:
                pix_d = l0 * d[i0] + l1 * d[i1] + l2 * d[i2]
            win = cover & (pix_d < depth[ymin:ymax + 1, xmin:xmax + 1])
            if not win.any():
                continue
            sub = (slice(ymin, ymax + 1), slice(xmin, xmax + 1))
            depth[sub] = np.where(win, pix_d, depth[sub])
            face_id[sub] = np.where(win, fi, face_id[sub])
            mesh_id[sub] = np.where(win, mi, mesh_id[sub])
    return RenderBuffers(depth=depth, face_id=face_id, mesh_id=mesh_id)


def _covers(e, dx, dy):
    """Edge inclusion with a top/left rule for exact-zero edge values."""
    on_edge_keep = (dy > 0) | ((dy == 0) & (dx < 0))
    return (e > 0) | ((e == 0) & on_edge_keep)


def sample_turntable_views(center, radius, resolution, fov=0.7,
                           equator_step_deg=10.0,
                           ring_elevation_deg=30.0,
                           ring_step_deg=30.0) -> list:
    """Sixty perspective cameras on a sphere around `center`.

    One equatorial ring at `equator_step_deg` azimuth spacing plus upper
    and lower rings at +-`ring_elevation_deg` elevation with
    `ring_step_deg` spacing. Defaults give 36 + 12 + 12 = 60 views.
    """
    if radius <= 0:
        raise InvalidInputError("radius must be positive")
    center = np.asarray(center, dtype=np.float64)
    cams = []
    for elev_deg, step in ((0.0, equator_step_deg),
                           (ring_elevation_deg, ring_step_deg),
                           (-ring_elevation_deg, ring_step_deg)):
        elev = math.radians(elev_deg)
        n = int(round(360.0 / step))
        for k in range(n):
            az = math.radians(k * step)
            pos = center + radius * np.array([
                math.cos(elev) * math.cos(az),
                math.sin(elev),
                math.cos(elev) * math.sin(az)])
            cams.append(look_at_camera(pos, center, mode="perspective",
                                       resolution=resolution, fov=fov))
    return cams


def vote_vertex_labels(mesh: TriMesh, views, tau_vis: float = TAU_VIS) -> np.ndarray:
    """Per-vertex garment flag by majority vote over visible views.

    A vertex counts as visible in a view when its projected depth lies
    within tau_vis of that view's depth buffer. It is labeled 1 when a
    strict majority of the views it is visible in mark it inside the
    garment mask; vertices visible nowhere stay 0.
    """
    if not views:
        raise InvalidInputError("vote_vertex_labels needs at least one view")
    visible = np.zeros(mesh.n_vertices, dtype=np.int64)
    hits = np.zeros(mesh.n_vertices, dtype=np.int64)
    for camera, mask in views:
        m = mask.mask if isinstance(mask, LabelMask) else np.asarray(mask, dtype=bool)
        w, h = camera.resolution
        if m.shape != (h, w):
            raise InvalidInputError(
                f"mask shape {m.shape} does not match camera {(h, w)}")
        buffers = render_buffers(mesh, camera)
        px, py, d = camera.project(mesh.vertices)
        ix = np.rint(px).astype(np.int64)
        iy = np.rint(py).astype(np.int64)
        inb = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h) & (d > 0)
        buf = np.full(mesh.n_vertices, np.inf)
        buf[inb] = buffers.depth[iy[inb], ix[inb]]
        vis = inb & (np.abs(d - buf) <= tau_vis)
        visible += vis
        in_mask = np.zeros(mesh.n_vertices, dtype=bool)
        in_mask[inb] = m[iy[inb], ix[inb]]
        hits += vis & in_mask
    labels = np.zeros(mesh.n_vertices, dtype=np.int64)
    labels[(visible > 0) & (2 * hits > visible)] = 1
    return labels


def refine_labels(mesh: TriMesh, labels, smoothing_iters: int = 3) -> np.ndarray:
    """Keep only the largest connected component of each nonzero label,
    then run 1-ring majority relabeling rounds."""
    labels = np.asarray(labels, dtype=np.int64).copy()
    if len(labels) != mesh.n_vertices:
        raise InvalidInputError("labels length must equal vertex count")

    for value in np.unique(labels):
        if value == 0:
            continue
        comps = connected_components(mesh, set(np.nonzero(labels == value)[0].tolist()))
        for extra in comps[1:]:
            labels[list(extra)] = 0

    if smoothing_iters <= 0:
        return labels
    offsets, neighbors = vertex_adjacency(mesh)
    values = np.unique(labels)
    if len(values) < 2:
        return labels
    src = np.repeat(np.arange(mesh.n_vertices), np.diff(offsets))
    rows = np.arange(mesh.n_vertices)
    for _ in range(smoothing_iters):
        col = np.searchsorted(values, labels)
        counts = np.zeros((mesh.n_vertices, len(values)), dtype=np.int64)
        np.add.at(counts, (src, col[neighbors]), 1)
        counts[rows, col] += 1  # vertex votes for itself
        best = counts.max(axis=1)
        keep = counts[rows, col] == best  # current label ties or wins
        winner = values[np.argmax(counts == best[:, None], axis=1)]
        labels = np.where(keep, labels, winner)
    return labels


# ------------------------------------------------------------- mask I/O

def save_mask(path, mask) -> None:
    """Write a garment mask as 1-channel PNG or PGM (nonzero = garment)."""
    m = mask.mask if isinstance(mask, LabelMask) else np.asarray(mask, dtype=bool)
    path = Path(path)
    data = (m.astype(np.uint8) * 255)
    if path.suffix.lower() == ".png":
        from PIL import Image
        Image.fromarray(data, mode="L").save(path)
    elif path.suffix.lower() == ".pgm":
        with open(path, "wb") as fh:
            fh.write(f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii"))
            fh.write(data.tobytes())
    else:
        raise UsageError(f"unsupported mask extension {path.suffix!r}")


def load_mask(path) -> LabelMask:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image
        img = Image.open(path).convert("L")
        return LabelMask(np.asarray(img) > 0)
    if path.suffix.lower() == ".pgm":
        with open(path, "rb") as fh:
            data = fh.read()
        return LabelMask(_parse_pgm(data, str(path)))
    raise UsageError(f"unsupported mask extension {path.suffix!r}")


def _parse_pgm(data: bytes, path: str) -> np.ndarray:
    tokens = []
    i = 0
    # header: magic, width, height, maxval; comments start with '#'
    while len(tokens) < 4 and i < len(data):
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif data[i:i + 1].isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if len(tokens) < 4 or tokens[0] not in (b"P2", b"P5"):
        raise FormatError("not a PGM file", path=path)
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if tokens[0] == b"P5":
        i += 1  # single whitespace after maxval
        dtype = np.uint8 if maxval < 256 else ">u2"
        pix = np.frombuffer(data[i:], dtype=dtype, count=width * height)
    else:
        pix = np.array(data[i:].split(), dtype=np.int64)
        if len(pix) != width * height:
            raise FormatError("PGM pixel count mismatch", path=path)
    return pix.reshape(height, width) > 0


def save_camera(path, camera: Camera) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(camera.to_json(), fh, indent=1)


def load_camera(path) -> Camera:
    with open(path, "r", encoding="utf-8") as fh:
        return Camera.from_json(json.load(fh))


def save_cameras(path, cameras) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([c.to_json() for c in cameras], fh, indent=1)


def load_cameras(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return [Camera.from_json(d) for d in json.load(fh)]
