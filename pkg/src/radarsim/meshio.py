"""Mesh loading (OBJ, ASCII/binary PLY) and a minimal OBJ writer.

Polygons are fan-triangulated. OBJ ``usemtl`` names are returned per
triangle so callers can bind them to material table entries.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Tuple

import numpy as np


class MeshFormatError(ValueError):
    pass


def _fan(poly: List[int]):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def load_obj(path) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """Return (vertices, triangles, per-triangle usemtl name or '')."""
    verts: List[List[float]] = []
    tris: List[Tuple[int, int, int]] = []
    groups: List[str] = []
    current = ""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(x) for x in parts[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError("vertex needs 3 coordinates")
                elif tag == "f":
                    poly = []
                    for tok in parts[1:]:
                        i = int(tok.split("/")[0])
                        poly.append(i - 1 if i > 0 else len(verts) + i)
                    if len(poly) < 3:
                        raise ValueError("face needs at least 3 vertices")
                    for t in _fan(poly):
                        tris.append(t)
                        groups.append(current)
                elif tag == "usemtl":
                    current = parts[1] if len(parts) > 1 else ""
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: {exc}") from None
    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    t = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if len(t) and (t.min() < 0 or t.max() >= len(v)):
        raise MeshFormatError(f"{path}: face references a missing vertex")
    return v, t, groups


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(buf: bytes):
    end = buf.find(b"end_header")
    if not buf.startswith(b"ply") or end < 0:
        raise MeshFormatError("not a PLY file")
    nl = buf.find(b"\n", end)
    body_start = nl + 1 if nl >= 0 else len(buf)
    lines = buf[:end].decode("ascii", "replace").splitlines()
    fmt = None
    elements = []
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise MeshFormatError("property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], "list", parts[2], parts[3]))
            else:
                elements[-1][2].append((parts[2], parts[1]))
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise MeshFormatError(f"unsupported PLY format {fmt!r}")
    return fmt, elements, body_start


def load_ply(path) -> Tuple[np.ndarray, np.ndarray]:
    buf = Path(path).read_bytes()
    fmt, elements, pos = _parse_ply_header(buf)
    verts = None
    faces: List[List[int]] = []
    if fmt == "ascii":
        tokens = buf[pos:].split()
        k = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = {}
                for p in props:
                    if p[1] == "list":
                        n = int(tokens[k]); k += 1
                        row[p[0]] = [int(float(x)) for x in tokens[k:k + n]]
                        k += n
                    else:
                        row[p[0]] = float(tokens[k]); k += 1
                rows.append(row)
            if name == "vertex":
                verts = np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=np.float64)
            elif name == "face":
                key = next(p[0] for p in props if p[1] == "list")
                faces = [r[key] for r in rows]
    else:
        end = "<" if fmt == "binary_little_endian" else ">"
        for name, count, props in elements:
            if all(p[1] != "list" for p in props):
                dt = np.dtype([(p[0], end + _PLY_TYPES[p[1]]) for p in props])
                arr = np.frombuffer(buf, dtype=dt, count=count, offset=pos)
                pos += dt.itemsize * count
                if name == "vertex":
                    verts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
                continue
            rows = []
            for _ in range(count):
                row = {}
                for p in props:
                    if p[1] == "list":
                        ct = np.dtype(end + _PLY_TYPES[p[2]])
                        it = np.dtype(end + _PLY_TYPES[p[3]])
                        n = int(np.frombuffer(buf, ct, 1, pos)[0]); pos += ct.itemsize
                        row[p[0]] = np.frombuffer(buf, it, n, pos).astype(np.int64).tolist()
                        pos += it.itemsize * n
                    else:
                        dt = np.dtype(end + _PLY_TYPES[p[1]])
                        row[p[0]] = np.frombuffer(buf, dt, 1, pos)[0]
                        pos += dt.itemsize
                rows.append(row)
            if name == "face":
                key = next(p[0] for p in props if p[1] == "list")
                faces = [r[key] for r in rows]
    if verts is None:
        raise MeshFormatError(f"{path}: no vertex element")
    tris = [t for poly in faces for t in _fan(poly)]
    t = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if len(t) and (t.min() < 0 or t.max() >= len(verts)):
        raise MeshFormatError(f"{path}: face references a missing vertex")
    return verts, t


def load_mesh(path) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return load_obj(path)
    if suffix == ".ply":
        v, t = load_ply(path)
        return v, t, [""] * len(t)
    raise MeshFormatError(f"unsupported mesh format {suffix!r}")


def write_obj(path, vertices, triangles, groups=None) -> None:
    """Write a triangle mesh; ``groups`` gives an optional usemtl name per triangle."""
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in np.asarray(vertices)]
    current = None
    for i, (a, b, c) in enumerate(np.asarray(triangles)):
        if groups is not None and groups[i] != current:
            current = groups[i]
            lines.append(f"usemtl {current}")
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
