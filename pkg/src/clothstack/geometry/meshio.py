"""Mesh file I/O: ASCII OBJ and ASCII/binary little-endian PLY.

Labels travel as an integer per-vertex property in PLY and as a sidecar
text file (one base-10 integer per line) next to OBJ files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, UsageError
from .trimesh import TriMesh

_PLY_SCALARS = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


def _label_sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".labels")


def load_mesh(path) -> TriMesh:
    """Load a mesh (with labels when present) from .obj or .ply."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".obj":
        return _load_obj(path)
    if ext == ".ply":
        return _load_ply(path)
    raise UsageError(f"unsupported mesh extension {ext!r} (use .obj or .ply)")


def save_mesh(path, mesh: TriMesh, ascii_ply: bool = False) -> None:
    """Save a mesh to .obj or .ply; labels are persisted when present."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".obj":
        _save_obj(path, mesh)
    elif ext == ".ply":
        _save_ply(path, mesh, ascii_ply=ascii_ply)
    else:
        raise UsageError(f"unsupported mesh extension {ext!r} (use .obj or .ply)")


# ---------------------------------------------------------------- OBJ

def _load_obj(path: Path) -> TriMesh:
    verts = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise FormatError("vertex needs 3 coordinates",
                                      line=lineno, path=str(path))
                try:
                    verts.append([float(parts[1]), float(parts[2]),
                                  float(parts[3])])
                except ValueError:
                    raise FormatError("bad vertex coordinate",
                                      line=lineno, path=str(path))
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise FormatError("face needs at least 3 indices",
                                      line=lineno, path=str(path))
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise FormatError(f"bad face index {token!r}",
                                          line=lineno, path=str(path))
                    if i < 1:
                        raise FormatError(f"face index {i} must be positive",
                                          line=lineno, path=str(path))
                    idx.append(i - 1)
                # fan-triangulate polygons
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
                if max(idx) >= len(verts):
                    # OBJ files in the wild always define vertices first
                    raise FormatError(
                        f"face index {max(idx) + 1} exceeds vertex count",
                        line=lineno, path=str(path))
            # other record types (vn, vt, usemtl, ...) are ignored

    labels = None
    sidecar = _label_sidecar(path)
    if sidecar.exists():
        labels = _load_label_sidecar(sidecar, len(verts))
    return TriMesh(np.asarray(verts, dtype=np.float64).reshape(-1, 3),
                   np.asarray(faces, dtype=np.int64).reshape(-1, 3), labels)


def _load_label_sidecar(path: Path, n_vertices: int) -> np.ndarray:
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise FormatError("label lines must hold one integer",
                                  line=lineno, path=str(path))
    if len(labels) != n_vertices:
        raise FormatError(
            f"{len(labels)} labels for {n_vertices} vertices", path=str(path))
    return np.asarray(labels, dtype=np.int64)


def _save_obj(path: Path, mesh: TriMesh) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
    if mesh.labels is not None:
        with open(_label_sidecar(path), "w", encoding="utf-8") as fh:
            for lab in mesh.labels:
                fh.write(f"{int(lab)}\n")


# ---------------------------------------------------------------- PLY

def _load_ply(path: Path) -> TriMesh:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise FormatError("not a PLY file (missing 'ply' magic)",
                              line=1, path=str(path))
        fmt = None
        elements = []  # list of (name, count, [(prop_kind, ...)])
        lineno = 1
        while True:
            raw = fh.readline()
            lineno += 1
            if not raw:
                raise FormatError("unterminated PLY header",
                                  line=lineno, path=str(path))
            tokens = raw.decode("ascii", "replace").strip().split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                if tokens[1] not in ("ascii", "binary_little_endian"):
                    raise FormatError(f"unsupported PLY format {tokens[1]!r}",
                                      line=lineno, path=str(path))
                fmt = tokens[1]
            elif tokens[0] == "element":
                elements.append([tokens[1], int(tokens[2]), []])
            elif tokens[0] == "property":
                if not elements:
                    raise FormatError("property before any element",
                                      line=lineno, path=str(path))
                if tokens[1] == "list":
                    elements[-1][2].append(("list", tokens[2], tokens[3],
                                            tokens[4]))
                else:
                    elements[-1][2].append(("scalar", tokens[1], tokens[2]))
            elif tokens[0] == "end_header":
                break
        if fmt is None:
            raise FormatError("PLY header missing format line", path=str(path))

        verts = None
        labels = None
        faces = []
        for name, count, props in elements:
            if fmt == "ascii":
                rows = _read_ply_ascii(fh, count, props, path, lineno)
            else:
                rows = _read_ply_binary(fh, count, props, path)
            if name == "vertex":
                cols = {p[2]: i for i, p in enumerate(props)
                        if p[0] == "scalar"}
                for axis in ("x", "y", "z"):
                    if axis not in cols:
                        raise FormatError(f"vertex element lacks {axis!r}",
                                          path=str(path))
                verts = np.array([[r[cols["x"]], r[cols["y"]], r[cols["z"]]]
                                  for r in rows], dtype=np.float64)
                if "label" in cols:
                    labels = np.array([int(r[cols["label"]]) for r in rows],
                                      dtype=np.int64)
            elif name == "face":
                li = next((i for i, p in enumerate(props) if p[0] == "list"),
                          None)
                if li is None:
                    raise FormatError("face element lacks an index list",
                                      path=str(path))
                for r in rows:
                    idx = r[li]
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
        if verts is None:
            raise FormatError("PLY file has no vertex element", path=str(path))
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(verts)):
            raise FormatError("face index out of range", path=str(path))
        return TriMesh(verts.reshape(-1, 3), faces, labels)


def _read_ply_ascii(fh, count, props, path, header_lines):
    rows = []
    lineno = header_lines
    for _ in range(count):
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise FormatError("unexpected end of file", line=lineno,
                              path=str(path))
        tokens = raw.decode("ascii", "replace").split()
        row = []
        pos = 0
        try:
            for p in props:
                if p[0] == "list":
                    n = int(tokens[pos]); pos += 1
                    row.append([int(tokens[pos + i]) for i in range(n)])
                    pos += n
                else:
                    row.append(float(tokens[pos])); pos += 1
        except (ValueError, IndexError):
            raise FormatError("malformed PLY data row", line=lineno,
                              path=str(path))
        rows.append(row)
    return rows


def _read_ply_binary(fh, count, props, path):
    rows = []
    for _ in range(count):
        row = []
        for p in props:
            if p[0] == "list":
                cfmt, csize = _PLY_SCALARS[p[1]]
                ifmt, isize = _PLY_SCALARS[p[2]]
                raw = fh.read(csize)
                if len(raw) != csize:
                    raise FormatError("truncated PLY data", path=str(path))
                n = struct.unpack("<" + cfmt, raw)[0]
                raw = fh.read(isize * n)
                if len(raw) != isize * n:
                    raise FormatError("truncated PLY data", path=str(path))
                row.append(list(struct.unpack(f"<{n}{ifmt}", raw)))
            else:
                sfmt, size = _PLY_SCALARS[p[1]]
                raw = fh.read(size)
                if len(raw) != size:
                    raise FormatError("truncated PLY data", path=str(path))
                row.append(struct.unpack("<" + sfmt, raw)[0])
        rows.append(row)
    return rows


def _save_ply(path: Path, mesh: TriMesh, ascii_ply: bool = False) -> None:
    has_labels = mesh.labels is not None
    header = ["ply",
              "format ascii 1.0" if ascii_ply
              else "format binary_little_endian 1.0",
              f"element vertex {mesh.n_vertices}",
              "property double x", "property double y", "property double z"]
    if has_labels:
        header.append("property int label")
    header += [f"element face {mesh.n_faces}",
               "property list uchar int vertex_indices",
               "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if ascii_ply:
            for i, v in enumerate(mesh.vertices):
                row = f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}"
                if has_labels:
                    row += f" {int(mesh.labels[i])}"
                fh.write((row + "\n").encode("ascii"))
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))
        else:
            for i, v in enumerate(mesh.vertices):
                fh.write(struct.pack("<3d", v[0], v[1], v[2]))
                if has_labels:
                    fh.write(struct.pack("<i", int(mesh.labels[i])))
            for f in mesh.faces:
                fh.write(struct.pack("<B3i", 3, f[0], f[1], f[2]))
