"""PLY mesh reader/writer: ASCII and binary little-endian, optional vertex RGB.

The writer emits float64 coordinates (and normals) so meshes round-trip
losslessly, uchar colours, and int32 triangle indices. The reader accepts the
common scalar types for the x/y/z, nx/ny/nz and red/green/blue properties and
triangle-only face lists.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MeshError
from .mesh import TriangleMesh

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def write_ply(mesh: TriangleMesh, path, colors: np.ndarray | None = None,
              binary: bool = True) -> Path:
    """Write a mesh, optionally with per-vertex RGB colours (n, 3) uint8."""
    path = Path(path)
    n, m = mesh.n_vertices, mesh.n_triangles
    has_normals = mesh.normals is not None
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        if len(colors) != n:
            raise MeshError(f"got {len(colors)} colours for {n} vertices")

    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {n}"]
    header += [f"property double {c}" for c in "xyz"]
    if has_normals:
        header += [f"property double n{c}" for c in "xyz"]
    if colors is not None:
        header += [f"property uchar {c}" for c in ("red", "green", "blue")]
    header += [f"element face {m}", "property list uchar int vertex_indices", "end_header"]

    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if has_normals:
        fields += [("nx", "<f8"), ("ny", "<f8"), ("nz", "<f8")]
    if colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    vrec = np.empty(n, dtype=fields)
    for i, c in enumerate("xyz"):
        vrec[c] = mesh.vertices[:, i]
        if has_normals:
            vrec["n" + c] = mesh.normals[:, i]
    if colors is not None:
        for i, c in enumerate(("red", "green", "blue")):
            vrec[c] = colors[:, i]
    frec = np.empty(m, dtype=[("count", "u1"), ("idx", "<i4", (3,))])
    frec["count"] = 3
    frec["idx"] = mesh.triangles

    path.parent.mkdir(parents=True, exist_ok=True)
    if binary:
        with path.open("wb") as f:
            f.write(("\n".join(header) + "\n").encode("ascii"))
            f.write(vrec.tobytes())
            f.write(frec.tobytes())
    else:
        with path.open("w") as f:
            f.write("\n".join(header) + "\n")
            for row in vrec:
                parts = [repr(float(row[name])) for name, _ in fields[: 6 if has_normals else 3]]
                if colors is not None:
                    parts += [str(int(row[c])) for c in ("red", "green", "blue")]
                f.write(" ".join(parts) + "\n")
            for row in frec:
                f.write("3 " + " ".join(str(int(v)) for v in row["idx"]) + "\n")
    return path


def _parse_header(lines: list[str]):
    if not lines or lines[0] != "ply":
        raise MeshError("not a PLY file")
    fmt = None
    elements: list[tuple[str, int, list]] = []
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshError("PLY property before any element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
        elif parts[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshError(f"unsupported PLY format {fmt!r}")
    return fmt, elements


def read_ply(path) -> tuple[TriangleMesh, np.ndarray | None]:
    """Read a mesh; returns (mesh, colors) where colors is (n, 3) uint8 or None."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"mesh file not found: {path}")
    blob = path.read_bytes()
    end = blob.find(b"end_header\n")
    if end < 0:
        raise MeshError(f"{path}: missing end_header")
    body_at = end + len(b"end_header\n")
    header_lines = blob[:body_at].decode("ascii", errors="replace").splitlines()
    fmt, elements = _parse_header(header_lines)

    vertices = normals = colors = None
    triangles = np.empty((0, 3), dtype=np.int32)
    if fmt == "ascii":
        tokens = blob[body_at:].decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            if name == "vertex":
                cols = {}
                width = len(props)
                for r in range(count):
                    row = tokens[pos + r * width: pos + (r + 1) * width]
                    for (kind, *spec), tok in zip(props, row):
                        if kind != "scalar":
                            raise MeshError("list property on vertex element is unsupported")
                        cols.setdefault(spec[1], []).append(float(tok))
                pos += count * width
                vertices, normals, colors = _collect_vertex_columns(path, cols, count)
            elif name == "face":
                tris = []
                for _ in range(count):
                    k = int(tokens[pos]); pos += 1
                    if k != 3:
                        raise MeshError(f"{path}: only triangle faces are supported, got {k}-gon")
                    tris.append([int(t) for t in tokens[pos:pos + 3]])
                    pos += 3
                triangles = np.asarray(tris, dtype=np.int32).reshape(-1, 3)
            else:
                pos += count * len(props)  # skip unknown fixed-width elements
    else:
        offset = body_at
        for name, count, props in elements:
            if name == "face":
                dt = _face_dtype(props)
                rec = np.frombuffer(blob, dtype=dt, count=count, offset=offset)
                offset += dt.itemsize * count
                if count and not (rec["count"] == 3).all():
                    raise MeshError(f"{path}: only triangle faces are supported")
                triangles = rec["idx"].astype(np.int32).reshape(-1, 3)
            else:
                dt = _element_dtype(path, props)
                rec = np.frombuffer(blob, dtype=dt, count=count, offset=offset)
                offset += dt.itemsize * count
                if name == "vertex":
                    cols = {fname: rec[fname].astype(np.float64) for fname in rec.dtype.names}
                    vertices, normals, colors = _collect_vertex_columns(path, cols, count)
    if vertices is None:
        raise MeshError(f"{path}: no vertex element")
    return TriangleMesh(vertices, triangles, normals), colors


def _collect_vertex_columns(path, cols, count):
    def stack(names):
        return np.stack([np.asarray(cols[n], dtype=np.float64) for n in names], axis=1)

    if not all(c in cols for c in "xyz"):
        raise MeshError(f"{path}: vertex element lacks x/y/z")
    vertices = stack("xyz") if count else np.empty((0, 3))
    normals = stack(("nx", "ny", "nz")) if count and all(f"n{c}" in cols for c in "xyz") else None
    colors = None
    if count and all(c in cols for c in ("red", "green", "blue")):
        colors = stack(("red", "green", "blue")).astype(np.uint8)
    return vertices, normals, colors


def _element_dtype(path, props):
    fields = []
    for kind, *spec in props:
        if kind != "scalar":
            raise MeshError(f"{path}: unexpected list property {spec!r}")
        ptype, pname = spec
        if ptype not in _SCALAR_TYPES:
            raise MeshError(f"{path}: unsupported property type {ptype!r}")
        fields.append((pname, "<" + _SCALAR_TYPES[ptype]))
    return np.dtype(fields)


def _face_dtype(props):
    if len(props) != 1 or props[0][0] != "list":
        raise MeshError("face element must hold a single list property")
    _, count_t, idx_t, _ = props[0]
    if count_t not in _SCALAR_TYPES or idx_t not in _SCALAR_TYPES:
        raise MeshError(f"unsupported face list types {count_t!r}/{idx_t!r}")
    return np.dtype([("count", _SCALAR_TYPES[count_t]),
                     ("idx", "<" + _SCALAR_TYPES[idx_t], (3,))])
