"""Deterministic synthetic fixtures: articulated capsule-chain body plus
procedurally layered garments with labels and seeded penetrations.

The body is a closed surface of revolution around the +y axis (a chain of
smoothly blended capsule segments, one per joint). Garment layers reuse the
body's ring/azimuth stations at a normal offset, so every garment vertex is
radially aligned with one body vertex; that alignment gives exact ground
truth for weight transfer, canonicalization, and containment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .geometry import TriMesh, save_mesh
from .geometry.trimesh import submesh
from .skinning import Pose, SkinnedBody, save_pose, save_weights


@dataclass
class GarmentSpec:
    """One garment layer: offset shell over an axial coverage interval."""

    offset: float                      # normal offset inside coverage (m)
    coverage: tuple                    # (y_lo, y_hi) axial interval
    label: int = 1
    penetration_fraction: float = 0.0  # fraction of S pushed into the body
    penetration_depth: float = 0.005   # how far inside the body (m)


@dataclass
class FixtureSpec:
    joint_count: int = 4
    limb_lengths: tuple = None         # per-joint segment length (m)
    limb_radii: tuple = None           # per-joint radius (m)
    radial_segments: int = 48
    height_rings: int = 96
    cap_rings: int = 10
    geometry_blend: float = 0.05       # radius transition half-width (m)
    weight_blend: float = 0.05         # skinning falloff half-width (m)
    base_offset: float = 0.003         # garment hug distance outside coverage
    ramp_width: float = 0.03           # offset ramp width outside coverage
    layers: tuple = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self):
        if self.joint_count < 1:
            raise InvalidInputError("joint_count must be >= 1")
        if self.limb_lengths is None:
            self.limb_lengths = (0.25,) * self.joint_count
        if self.limb_radii is None:
            self.limb_radii = (0.08,) * self.joint_count
        if len(self.limb_lengths) != self.joint_count \
                or len(self.limb_radii) != self.joint_count:
            raise InvalidInputError("limb arrays must match joint_count")
        L = self.total_length
        for g in self.layers:
            if g.offset <= 0:
                raise InvalidInputError("garment offsets must be positive")
            lo, hi = g.coverage
            if not (0.0 <= lo < hi <= L):
                raise InvalidInputError(
                    f"coverage {g.coverage} outside body range [0, {L:.3f}]")

    @property
    def total_length(self) -> float:
        return float(sum(self.limb_lengths))

    @property
    def boundaries(self) -> np.ndarray:
        """Cumulative segment boundaries, including 0 and total length."""
        return np.concatenate([[0.0], np.cumsum(self.limb_lengths)])


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def icosphere(subdivisions: int = 3, radius: float = 1.0,
              center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Subdivided icosahedron; watertight, outward winding, deterministic."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]],
        dtype=np.int64)
    for _ in range(subdivisions):
        edge_mid = {}
        verts_list = list(verts)
        new_faces = []

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in edge_mid:
                edge_mid[key] = len(verts_list)
                verts_list.append(0.5 * (verts_list[a] + verts_list[b]))
            return edge_mid[key]

        for f in faces:
            a, b, c = (int(x) for x in f)
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.asarray(verts_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    verts = verts / np.linalg.norm(verts, axis=1)[:, None] * radius
    return TriMesh(verts + np.asarray(center, dtype=np.float64), faces)


def radius_profile(spec: FixtureSpec, y):
    """Body radius at axial position y (clamped into the body range)."""
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, spec.total_length)
    radii = np.asarray(spec.limb_radii)
    bounds = spec.boundaries
    r = np.full_like(y, radii[0])
    for i in range(1, spec.joint_count):
        s = _smoothstep((y - (bounds[i] - spec.geometry_blend))
                        / (2.0 * spec.geometry_blend))
        r = r * (1.0 - s) + radii[i] * s
    return r


def joint_weights(spec: FixtureSpec, y):
    """(N, J) skinning weights from axial position; rows sum to 1."""
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, spec.total_length)
    J = spec.joint_count
    bounds = spec.boundaries
    # s[i] ramps 0 -> 1 across internal boundary i; weights are differences
    s = [np.ones_like(y)]
    for i in range(1, J):
        s.append(_smoothstep((y - (bounds[i] - spec.weight_blend))
                             / (2.0 * spec.weight_blend)))
    s.append(np.zeros_like(y))
    w = np.stack([s[i] - s[i + 1] for i in range(J)], axis=1)
    return w


def _lathe(spec: FixtureSpec, ring_radius: np.ndarray):
    """Closed surface of revolution from per-ring radii.

    Rings run bottom cap, torso (height_rings stations over [0, L]),
    top cap; two pole vertices close the ends. Returns (vertices, faces,
    axial_param) where axial_param is each vertex's actual y.
    """
    R = spec.radial_segments
    L = spec.total_length
    ys = _ring_stations(spec)
    cap_n = spec.cap_rings

    phi = 2.0 * np.pi * np.arange(R) / R
    cphi, sphi = np.cos(phi), np.sin(phi)

    r_bot = ring_radius[cap_n]       # radius at the first torso ring (y=0)
    r_top = ring_radius[-cap_n - 1]  # radius at the last torso ring (y=L)

    verts = [np.array([[0.0, -r_bot, 0.0]])]
    ring_rows = []
    for i, y in enumerate(ys):
        rad = ring_radius[i]
        ring = np.stack([rad * cphi, np.full(R, y), rad * sphi], axis=1)
        ring_rows.append(ring)
    verts.extend(ring_rows)
    verts.append(np.array([[0.0, L + r_top, 0.0]]))
    vertices = np.concatenate(verts, axis=0)

    n_rings = len(ys)
    faces = []
    bot_pole = 0
    top_pole = 1 + n_rings * R
    ring0 = 1

    def vid(ring, i):
        return ring0 + ring * R + (i % R)

    for i in range(R):
        faces.append([bot_pole, vid(0, i), vid(0, i + 1)])
    for r in range(n_rings - 1):
        for i in range(R):
            a = vid(r, i)
            b = vid(r, i + 1)
            c = vid(r + 1, i + 1)
            d = vid(r + 1, i)
            faces.append([a, d, c])
            faces.append([a, c, b])
    for i in range(R):
        faces.append([top_pole, vid(n_rings - 1, i + 1), vid(n_rings - 1, i)])

    axial = vertices[:, 1].copy()
    return vertices, np.asarray(faces, dtype=np.int64), axial


def _ring_stations(spec: FixtureSpec) -> np.ndarray:
    """Axial y of every ring: cap rings below 0, torso, cap rings above L."""
    L = spec.total_length
    c = spec.cap_rings
    theta = (np.pi / 2.0) * (np.arange(c, 0, -1) / (c + 1))
    torso = np.linspace(0.0, L, spec.height_rings)
    r0 = radius_profile(spec, 0.0)
    rL = radius_profile(spec, L)
    bottom = -float(r0) * np.sin(theta)
    top = L + float(rL) * np.sin(theta[::-1])
    return np.concatenate([bottom, torso, top])


def _ring_cap_scale(spec: FixtureSpec) -> np.ndarray:
    """Per-ring radius multiplier: cos(theta) on caps, 1 on the torso."""
    c = spec.cap_rings
    theta = (np.pi / 2.0) * (np.arange(c, 0, -1) / (c + 1))
    return np.concatenate([np.cos(theta),
                           np.ones(spec.height_rings),
                           np.cos(theta[::-1])])


def make_body(spec: FixtureSpec):
    """Watertight capsule-chain body with smooth skinning weights.

    Returns (SkinnedBody, rest Pose). Joint i pivots at the start of its
    segment on the axis.
    """
    ys = _ring_stations(spec)
    base_r = radius_profile(spec, np.clip(ys, 0.0, spec.total_length))
    ring_radius = base_r * _ring_cap_scale(spec)
    vertices, faces, axial = _lathe(spec, ring_radius)
    weights = joint_weights(spec, axial)
    joints = np.stack([np.zeros(spec.joint_count),
                       spec.boundaries[:-1],
                       np.zeros(spec.joint_count)], axis=1)
    body = SkinnedBody(mesh=TriMesh(vertices, faces), weights=weights,
                       joints=joints)
    return body, Pose.identity(spec.joint_count)


def _offset_profile(spec: FixtureSpec, garment: GarmentSpec, y):
    """Normal offset of a garment over the body: full inside coverage,
    ramping down to the base hug distance outside."""
    y = np.asarray(y, dtype=np.float64)
    lo, hi = garment.coverage
    w = spec.ramp_width
    ramp_in = _smoothstep((y - (lo - w)) / w)
    ramp_out = _smoothstep(((hi + w) - y) / w)
    inside = ramp_in * ramp_out
    return spec.base_offset + (garment.offset - spec.base_offset) * inside


def make_garment_layer(body: SkinnedBody, offset: float, coverage,
                       spec: FixtureSpec, label: int = 1,
                       penetration_fraction: float = 0.0,
                       penetration_depth: float = 0.005,
                       seed: int | None = None) -> TriMesh:
    """Watertight garment shell over the coverage interval, labeled there.

    A seeded fraction of the labeled vertices can be pushed inside the body
    (past every inner layer) to create known ground-truth penetrations.
    """
    if offset <= 0:
        raise InvalidInputError("offset must be positive")
    garment = GarmentSpec(offset=offset, coverage=tuple(coverage), label=label,
                          penetration_fraction=penetration_fraction,
                          penetration_depth=penetration_depth)
    ys = _ring_stations(spec)
    y_clamped = np.clip(ys, 0.0, spec.total_length)
    base_r = radius_profile(spec, y_clamped) + _offset_profile(spec, garment, y_clamped)
    ring_radius = base_r * _ring_cap_scale(spec)
    vertices, faces, axial = _lathe(spec, ring_radius)

    lo, hi = garment.coverage
    labels = np.where((axial >= lo) & (axial <= hi), label, 0).astype(np.int64)

    if penetration_fraction > 0.0:
        rng = np.random.default_rng(spec.seed if seed is None else seed)
        s_idx = np.nonzero(labels == label)[0]
        n_push = int(round(penetration_fraction * len(s_idx)))
        pushed = rng.choice(s_idx, size=n_push, replace=False)
        body_r = radius_profile(spec, axial[pushed])
        new_r = body_r - penetration_depth
        if np.any(new_r <= 0):
            raise InvalidInputError("penetration depth exceeds body radius")
        old_r = np.linalg.norm(vertices[pushed][:, [0, 2]], axis=1)
        scale = new_r / old_r
        vertices[pushed, 0] *= scale
        vertices[pushed, 2] *= scale

    return TriMesh(vertices, faces, labels)


def perturb_pose(body: SkinnedBody, magnitude: float, seed: int) -> Pose:
    """Random pose: per-joint rotation (angle <= magnitude, radians) about
    the joint pivot plus a small translation scaling with magnitude."""
    J = body.joint_count
    if magnitude == 0.0:
        return Pose.identity(J)
    if body.joints is None:
        raise InvalidInputError("body has no joint positions")
    rng = np.random.default_rng(seed)
    mats = np.tile(np.eye(4), (J, 1, 1))
    for j in range(J):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.0, magnitude)
        K = np.array([[0, -axis[2], axis[1]],
                      [axis[2], 0, -axis[0]],
                      [-axis[1], axis[0], 0]])
        R = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)
        t_small = rng.uniform(-1.0, 1.0, size=3) * 0.01 * magnitude
        pivot = body.joints[j]
        mats[j, :3, :3] = R
        mats[j, :3, 3] = pivot - R @ pivot + t_small
    return Pose(mats)


def make_layer_stack(spec: FixtureSpec):
    """Canonical body plus all layers from the spec, inner to outer.

    Returns (body, rest_pose, layers) with layers a list of
    (TriMesh, garment_vertex_set).
    """
    body, rest = make_body(spec)
    layers = []
    for k, g in enumerate(spec.layers):
        mesh = make_garment_layer(body, g.offset, g.coverage, spec,
                                  label=g.label,
                                  penetration_fraction=g.penetration_fraction,
                                  penetration_depth=g.penetration_depth,
                                  seed=spec.seed + 101 * (k + 1))
        s_k = set(np.nonzero(mesh.labels == g.label)[0].tolist())
        layers.append((mesh, s_k))
    return body, rest, layers


def small_pipeline_spec(layers: int = 3, seed: int = 0,
                        radial_segments: int = 40, height_rings: int = 56,
                        penetration_fraction: float = 0.1) -> FixtureSpec:
    """Compact fixture sized so the full pipeline (UDF fit included) runs in
    minutes: short body, layer gaps comfortably wider than the extraction
    threshold."""
    garments = tuple(
        GarmentSpec(offset=0.010 + 0.012 * k,
                    coverage=(0.10 + 0.03 * k, 0.42 - 0.03 * k),
                    label=1,
                    penetration_fraction=penetration_fraction,
                    penetration_depth=0.004)
        for k in range(layers))
    return FixtureSpec(joint_count=4,
                       limb_lengths=(0.125,) * 4,
                       limb_radii=(0.06,) * 4,
                       radial_segments=radial_segments,
                       height_rings=height_rings,
                       cap_rings=8,
                       geometry_blend=0.03,
                       weight_blend=0.03,
                       base_offset=0.003,
                       ramp_width=0.02,
                       layers=garments,
                       seed=seed)


def write_fixture(out_dir, spec: FixtureSpec, pose_magnitude: float = 0.1,
                  train_overrides: dict | None = None) -> Path:
    """Emit a complete pipeline input set: body files, posed layer meshes,
    pose files, and a manifest. Returns the manifest path."""
    from .skinning import lbs_forward, transfer_weights

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    body, rest, layers = make_layer_stack(spec)

    save_mesh(out / "body.ply", body.mesh)
    save_weights(out / "body.weights", body.weights)
    with open(out / "body.joints.json", "w", encoding="utf-8") as fh:
        json.dump([[float(x) for x in j] for j in body.joints], fh)
    save_pose(out / "rest_pose.json", rest)

    entries = []
    references = []
    for k, (mesh, s_k) in enumerate(layers):
        pose = perturb_pose(body, pose_magnitude, seed=spec.seed + 7 * (k + 1))
        weights = transfer_weights(body, mesh)
        posed = mesh.with_vertices(lbs_forward(mesh.vertices, weights, pose))
        mesh_path = out / f"layer{k + 1}.ply"
        pose_path = out / f"layer{k + 1}.pose.json"
        save_mesh(mesh_path, posed)
        save_pose(pose_path, pose)
        entries.append({
            "mesh": mesh_path.name,
            "pose": pose_path.name,
            "labels": {"source": "vertex"},
            "garment_label": int(spec.layers[k].label),
        })
        # penetration-free garment region in canonical pose, for CD/NC scoring
        g = spec.layers[k]
        clean = make_garment_layer(body, g.offset, g.coverage, spec,
                                   label=g.label, penetration_fraction=0.0)
        ref = submesh(clean, np.nonzero(clean.labels == g.label)[0])
        ref_path = out / f"layer{k + 1}.ref.ply"
        save_mesh(ref_path, ref)
        references.append(ref_path.name)

    train = {"learning_rate": 1e-4, "batch_size": 1024, "iterations": 1500,
             "seed": spec.seed}
    if train_overrides:
        train.update(train_overrides)
    manifest = {
        "version": 1,
        "body": {"mesh": "body.ply", "weights": "body.weights",
                 "joints": "body.joints.json"},
        "canonical_pose": "rest_pose.json",
        "layers": entries,
        "reference_meshes": references,
        "params": {
            "epsilon": 0.002,
            "delta": 0.01,
            "tau": 0.003,
            "pe_count": 4,
            "grid_resolution": 128,
            "sample_counts": [8000, 8000, 4000],
            "sample_sigma": 0.01,
            "train": train,
            "metrics": {"n_samples": 20000, "resolution": 512, "seed": spec.seed},
        },
        "seed": spec.seed,
        "output_dir": "out",
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest_path
