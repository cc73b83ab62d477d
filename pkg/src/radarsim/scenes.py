"""Procedural meshes for tests, benchmarks and examples."""

from __future__ import annotations

import math

import numpy as np

from .geometry import TriangleMesh

# two triangles per face, outward winding for an axis-aligned unit cube
_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2],      # z-
    [4, 5, 6], [4, 6, 7],      # z+
    [0, 1, 5], [0, 5, 4],      # y-
    [2, 3, 7], [2, 7, 6],      # y+
    [1, 2, 6], [1, 6, 5],      # x+
    [0, 4, 7], [0, 7, 3],      # x-
])


def box(lo, hi, material_id: int = 1) -> TriangleMesh:
    """Closed axis-aligned box with 12 triangles."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    v = np.array([
        [lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]], [hi[0], hi[1], lo[2]], [lo[0], hi[1], lo[2]],
        [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]], [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]],
    ])
    return TriangleMesh(v, _BOX_FACES.copy(), np.full(12, material_id, dtype=np.int32))


def quad(center, normal, half_width: float, half_height: float, material_id: int = 1) -> TriangleMesh:
    """Rectangle centred at ``center`` facing ``normal`` (vertical edges along +z when possible)."""
    c = np.asarray(center, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    up = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    side = np.cross(up, n)
    side /= np.linalg.norm(side)
    up = np.cross(n, side)
    v = np.array([c - side * half_width - up * half_height,
                  c + side * half_width - up * half_height,
                  c + side * half_width + up * half_height,
                  c - side * half_width + up * half_height])
    return TriangleMesh(v, np.array([[0, 1, 2], [0, 2, 3]]), np.full(2, material_id, dtype=np.int32))


def wall_x(distance: float, half_width: float = 50.0, material_id: int = 1) -> TriangleMesh:
    """Wall in the plane x = ``distance``, facing the origin."""
    return quad([distance, 0.0, 0.0], [-1.0, 0.0, 0.0], half_width, half_width, material_id)


def box_room(size=(12.0, 8.0, 3.0), center=(0.0, 0.0, 0.0), material_id: int = 1) -> TriangleMesh:
    """Six walls of an axis-aligned room (12 triangles)."""
    c = np.asarray(center, dtype=np.float64)
    s = np.asarray(size, dtype=np.float64) / 2
    return box(c - s, c + s, material_id)


def cylinder_room(radius: float = 8.0, height: float = 4.0, segments: int = 400,
                  material_id: int = 1) -> TriangleMesh:
    """Open vertical cylinder centred on the origin, z in [-h/2, h/2]."""
    ang = 2.0 * math.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    lo = np.column_stack([ring, np.full(segments, -height / 2)])
    hi = np.column_stack([ring, np.full(segments, height / 2)])
    v = np.vstack([lo, hi])
    i = np.arange(segments)
    j = (i + 1) % segments
    tris = np.vstack([np.column_stack([i, j, j + segments]), np.column_stack([i, j + segments, i + segments])])
    return TriangleMesh(v, tris, np.full(len(tris), material_id, dtype=np.int32))


def random_triangles(n: int, rng, extent: float = 5.0, size: float = 0.7) -> TriangleMesh:
    centers = rng.uniform(-extent, extent, (n, 1, 3))
    v = (centers + rng.normal(0.0, size, (n, 3, 3))).reshape(-1, 3)
    mesh = TriangleMesh(v, np.arange(3 * n).reshape(n, 3))
    return mesh.drop_degenerate()


def clutter_scene(n_boxes: int = 400, room=(60.0, 40.0, 6.0), seed: int = 0,
                  material_ids=(1,)) -> TriangleMesh:
    """Room filled with randomly placed boxes; 12 * (n_boxes + 1) triangles."""
    rng = np.random.default_rng(seed)
    parts = [box_room(room, material_id=material_ids[0])]
    half = np.asarray(room) / 2
    for k in range(n_boxes):
        size = rng.uniform(0.3, 2.0, 3)
        c = rng.uniform(-half + size, half - size)
        c[2] = -half[2] + size[2] / 2
        if np.linalg.norm(c[:2]) < 2.0:
            c[:2] += 3.0
        parts.append(box(c - size / 2, c + size / 2, material_ids[k % len(material_ids)]))
    return TriangleMesh.merge(parts)
