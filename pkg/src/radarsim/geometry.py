"""Triangle meshes, poses, a BVH over triangles and ray queries against it.

The traversal kernels are numba-compiled with ``nogil`` so many threads can
query one (immutable) index at the same time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np

BARY_EPS = 1e-7
SPAWN_EPS = 1e-4
SEGMENT_EPS = 1e-4

_LEAF_SIZE = 4
_SAH_BINS = 16
_STACK = 128


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Small vector / rotation helpers
# ---------------------------------------------------------------------------

def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / n


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion given as (qx, qy, qz, qw)."""
    x, y, z, w = (float(c) for c in q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_mul(a, b) -> np.ndarray:
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([0.0, 0.0, np.sin(yaw / 2), np.cos(yaw / 2)])


@dataclass(frozen=True)
class Pose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        q = np.asarray(self.orientation, dtype=np.float64).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise GeometryError(f"quaternion norm {np.linalg.norm(q)!r} is not 1")
        object.__setattr__(self, "orientation", q)

    @classmethod
    def from_xyz_yaw(cls, x=0.0, y=0.0, z=0.0, yaw=0.0) -> "Pose":
        return cls(np.array([x, y, z], dtype=np.float64), quat_from_yaw(yaw))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def compose(self, other: "Pose") -> "Pose":
        """``self * other``: ``other`` expressed in this pose's frame."""
        q = quat_mul(self.orientation, other.orientation)
        q = q / np.linalg.norm(q)
        return Pose(self.position + self.rotation @ other.position, q)

    def transform_points(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) @ self.rotation.T + self.position


# ---------------------------------------------------------------------------
# Mesh
# ---------------------------------------------------------------------------

@dataclass
class TriangleMesh:
    vertices: np.ndarray                 # (V, 3) float64
    triangles: np.ndarray                # (T, 3) int64 vertex indices
    material_ids: np.ndarray = None      # (T,) int32

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.material_ids is None:
            self.material_ids = np.ones(len(self.triangles), dtype=np.int32)
        self.material_ids = np.ascontiguousarray(self.material_ids, dtype=np.int32).reshape(-1)
        if len(self.material_ids) != len(self.triangles):
            raise GeometryError("material_ids length does not match triangle count")
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise GeometryError("triangle references a vertex index out of range")

    def __len__(self):
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def drop_degenerate(self, min_area=1e-14) -> "TriangleMesh":
        keep = self.areas() > min_area
        return TriangleMesh(self.vertices, self.triangles[keep], self.material_ids[keep])

    def transformed(self, pose: Pose, scale=1.0) -> "TriangleMesh":
        return TriangleMesh(pose.transform_points(self.vertices * scale), self.triangles.copy(),
                            self.material_ids.copy())

    @staticmethod
    def merge(meshes) -> "TriangleMesh":
        verts, tris, mats, offset = [], [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + offset)
            mats.append(m.material_ids)
            offset += len(m.vertices)
        if not verts:
            return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        return TriangleMesh(np.vstack(verts), np.vstack(tris), np.concatenate(mats))


@dataclass
class RayHit:
    t: float
    point: np.ndarray
    geometric_normal: np.ndarray
    triangle_id: int
    material_id: int


# ---------------------------------------------------------------------------
# BVH build
# ---------------------------------------------------------------------------

@nb.njit(cache=True)
def _surface_area(lo, hi):
    d0 = max(hi[0] - lo[0], 0.0)
    d1 = max(hi[1] - lo[1], 0.0)
    d2 = max(hi[2] - lo[2], 0.0)
    return 2.0 * (d0 * d1 + d1 * d2 + d2 * d0)


@nb.njit(cache=True)
def _build_bvh(tri_lo, tri_hi, centroids, leaf_size, n_bins):
    n = tri_lo.shape[0]
    max_nodes = 2 * n
    node_lo = np.empty((max_nodes, 3))
    node_hi = np.empty((max_nodes, 3))
    # inner: left child index, right child index; leaf: first prim, -count
    node_a = np.zeros(max_nodes, dtype=np.int64)
    node_b = np.zeros(max_nodes, dtype=np.int64)
    order = np.arange(n)

    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_start = np.empty(max_nodes, dtype=np.int64)
    stack_end = np.empty(max_nodes, dtype=np.int64)
    sp = 0
    n_nodes = 1
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    sp = 1

    bin_lo = np.empty((n_bins, 3))
    bin_hi = np.empty((n_bins, 3))
    bin_cnt = np.zeros(n_bins, dtype=np.int64)
    right_area = np.empty(n_bins)
    right_cnt = np.empty(n_bins, dtype=np.int64)

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        s = stack_start[sp]
        e = stack_end[sp]
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for i in range(s, e):
            p = order[i]
            for k in range(3):
                lo[k] = min(lo[k], tri_lo[p, k])
                hi[k] = max(hi[k], tri_hi[p, k])
                clo[k] = min(clo[k], centroids[p, k])
                chi[k] = max(chi[k], centroids[p, k])
        node_lo[node] = lo
        node_hi[node] = hi
        count = e - s
        if count <= leaf_size:
            node_a[node] = s
            node_b[node] = -count
            continue

        # binned SAH over centroid bounds
        best_cost = np.inf
        best_axis = -1
        best_split = -1
        for axis in range(3):
            extent = chi[axis] - clo[axis]
            if extent <= 0.0:
                continue
            for b in range(n_bins):
                bin_cnt[b] = 0
                for k in range(3):
                    bin_lo[b, k] = np.inf
                    bin_hi[b, k] = -np.inf
            scale = n_bins / extent
            for i in range(s, e):
                p = order[i]
                b = int((centroids[p, axis] - clo[axis]) * scale)
                if b >= n_bins:
                    b = n_bins - 1
                bin_cnt[b] += 1
                for k in range(3):
                    bin_lo[b, k] = min(bin_lo[b, k], tri_lo[p, k])
                    bin_hi[b, k] = max(bin_hi[b, k], tri_hi[p, k])
            acc_lo = np.full(3, np.inf)
            acc_hi = np.full(3, -np.inf)
            acc_n = 0
            for b in range(n_bins - 1, 0, -1):
                acc_n += bin_cnt[b]
                for k in range(3):
                    acc_lo[k] = min(acc_lo[k], bin_lo[b, k])
                    acc_hi[k] = max(acc_hi[k], bin_hi[b, k])
                right_cnt[b] = acc_n
                right_area[b] = _surface_area(acc_lo, acc_hi) if acc_n > 0 else 0.0
            acc_lo[:] = np.inf
            acc_hi[:] = -np.inf
            acc_n = 0
            for b in range(n_bins - 1):
                acc_n += bin_cnt[b]
                for k in range(3):
                    acc_lo[k] = min(acc_lo[k], bin_lo[b, k])
                    acc_hi[k] = max(acc_hi[k], bin_hi[b, k])
                if acc_n == 0 or right_cnt[b + 1] == 0:
                    continue
                cost = _surface_area(acc_lo, acc_hi) * acc_n + right_area[b + 1] * right_cnt[b + 1]
                if cost < best_cost:
                    best_cost = cost
                    best_axis = axis
                    best_split = b

        mid = -1
        if best_axis >= 0:
            axis = best_axis
            scale = n_bins / (chi[axis] - clo[axis])
            i = s
            j = e - 1
            while i <= j:
                b = int((centroids[order[i], axis] - clo[axis]) * scale)
                if b >= n_bins:
                    b = n_bins - 1
                if b <= best_split:
                    i += 1
                else:
                    tmp = order[i]
                    order[i] = order[j]
                    order[j] = tmp
                    j -= 1
            mid = i
        if mid <= s or mid >= e:
            # median split fallback along the widest centroid axis
            axis = 0
            for k in range(1, 3):
                if chi[k] - clo[k] > chi[axis] - clo[axis]:
                    axis = k
            keys = np.empty(e - s)
            for i in range(s, e):
                keys[i - s] = centroids[order[i], axis]
            idx = np.argsort(keys, kind="mergesort")
            seg = order[s:e].copy()
            for i in range(e - s):
                order[s + i] = seg[idx[i]]
            mid = s + (e - s) // 2

        left = n_nodes
        right = n_nodes + 1
        n_nodes += 2
        node_a[node] = left
        node_b[node] = right
        stack_node[sp] = right
        stack_start[sp] = mid
        stack_end[sp] = e
        sp += 1
        stack_node[sp] = left
        stack_start[sp] = s
        stack_end[sp] = mid
        sp += 1

    return node_lo[:n_nodes].copy(), node_hi[:n_nodes].copy(), node_a[:n_nodes].copy(), node_b[:n_nodes].copy(), order


class AccelIndex:
    """Immutable BVH over a triangle mesh.

    Triangle data is stored in BVH leaf order; ``prim_ids`` maps back to the
    mesh's triangle numbering.
    """

    def __init__(self, mesh: TriangleMesh, leaf_size: int = _LEAF_SIZE):
        if len(mesh) == 0:
            raise GeometryError("cannot build an acceleration index over an empty mesh")
        if np.any(mesh.areas() <= 0.0):
            raise GeometryError("mesh contains degenerate (zero-area) triangles")
        self.mesh = mesh
        v = mesh.vertices[mesh.triangles]
        lo = v.min(axis=1)
        hi = v.max(axis=1)
        cen = v.mean(axis=1)
        node_lo, node_hi, node_a, node_b, order = _build_bvh(lo, hi, cen, leaf_size, _SAH_BINS)
        self.node_lo = node_lo
        self.node_hi = node_hi
        self.node_a = node_a
        self.node_b = node_b
        self.prim_ids = np.ascontiguousarray(order)
        v = v[order]
        self.v0 = np.ascontiguousarray(v[:, 0])
        self.e1 = np.ascontiguousarray(v[:, 1] - v[:, 0])
        self.e2 = np.ascontiguousarray(v[:, 2] - v[:, 0])
        self.normals = np.ascontiguousarray(normalize(np.cross(self.e1, self.e2)))
        self.material_ids = np.ascontiguousarray(mesh.material_ids[order])
        for a in (self.node_lo, self.node_hi, self.node_a, self.node_b):
            a.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.node_a)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.node_b <= 0))

    def arrays(self):
        return (self.node_lo, self.node_hi, self.node_a, self.node_b,
                self.v0, self.e1, self.e2)


def build_accel(mesh: TriangleMesh) -> AccelIndex:
    return AccelIndex(mesh)


# ---------------------------------------------------------------------------
# Query kernels
# ---------------------------------------------------------------------------

@nb.njit(cache=True, nogil=True, inline="always")
def _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, i):
    e1x = e1[i, 0]; e1y = e1[i, 1]; e1z = e1[i, 2]
    e2x = e2[i, 0]; e2y = e2[i, 1]; e2z = e2[i, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return np.inf
    inv = 1.0 / det
    tx = ox - v0[i, 0]; ty = oy - v0[i, 1]; tz = oz - v0[i, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -1e-7 or u > 1.0 + 1e-7:
        return np.inf
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -1e-7 or u + v > 1.0 + 1e-7:
        return np.inf
    return (e2x * qx + e2y * qy + e2z * qz) * inv


@nb.njit(cache=True, nogil=True, inline="always")
def _slab(lo, hi, o, inv, tn, tf):
    if inv == np.inf or inv == -np.inf:
        # ray parallel to this slab
        if o < lo or o > hi:
            return np.inf, -np.inf
        return tn, tf
    t0 = (lo - o) * inv
    t1 = (hi - o) * inv
    if t0 > t1:
        t0, t1 = t1, t0
    return max(tn, t0), min(tf, t1)


@nb.njit(cache=True, nogil=True, inline="always")
def _box_entry(lo, hi, node, ox, oy, oz, ix, iy, iz, tmax):
    tn, tf = _slab(lo[node, 0], hi[node, 0], ox, ix, -np.inf, np.inf)
    tn, tf = _slab(lo[node, 1], hi[node, 1], oy, iy, tn, tf)
    tn, tf = _slab(lo[node, 2], hi[node, 2], oz, iz, tn, tf)
    # slack guards against rounding at box faces for axis-aligned geometry
    tf += 1e-9 * (1.0 + abs(tf))
    if tn <= tf and tf >= 0.0 and tn <= tmax:
        return tn
    return np.inf


@nb.njit(cache=True, nogil=True, error_model="numpy")
def closest_hit(node_lo, node_hi, node_a, node_b, v0, e1, e2,
                ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Return (t, leaf-order triangle index) of the nearest hit in (tmin, tmax]."""
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    best_t = tmax
    best_i = -1
    stack = np.empty(_STACK, dtype=np.int64)
    sp = 0
    if _box_entry(node_lo, node_hi, 0, ox, oy, oz, ix, iy, iz, best_t) == np.inf:
        return np.inf, -1
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        a = node_a[node]
        b = node_b[node]
        if b <= 0:
            for i in range(a, a - b):
                t = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, i)
                # t is inf on a miss, which must not pass the t == tmax case
                if t > tmin and t != np.inf and (t < best_t or (t == best_t and (best_i < 0 or i < best_i))):
                    best_t = t
                    best_i = i
        else:
            ta = _box_entry(node_lo, node_hi, a, ox, oy, oz, ix, iy, iz, best_t)
            tb = _box_entry(node_lo, node_hi, b, ox, oy, oz, ix, iy, iz, best_t)
            if ta < tb:
                if tb != np.inf:
                    stack[sp] = b
                    sp += 1
                stack[sp] = a
                sp += 1
            else:
                if ta != np.inf:
                    stack[sp] = a
                    sp += 1
                if tb != np.inf:
                    stack[sp] = b
                    sp += 1
    if best_i < 0:
        return np.inf, -1
    return best_t, best_i


@nb.njit(cache=True, nogil=True, error_model="numpy")
def any_hit(node_lo, node_hi, node_a, node_b, v0, e1, e2,
            ox, oy, oz, dx, dy, dz, tmin, tmax):
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    stack = np.empty(_STACK, dtype=np.int64)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_entry(node_lo, node_hi, node, ox, oy, oz, ix, iy, iz, tmax) == np.inf:
            continue
        a = node_a[node]
        b = node_b[node]
        if b <= 0:
            for i in range(a, a - b):
                t = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, i)
                if tmin < t < tmax:
                    return True
        else:
            stack[sp] = a
            stack[sp + 1] = b
            sp += 2
    return False


@nb.njit(cache=True, nogil=True)
def _closest_batch(node_lo, node_hi, node_a, node_b, v0, e1, e2, origins, dirs, tmin, tmax, out_t, out_i):
    for r in range(origins.shape[0]):
        t, i = closest_hit(node_lo, node_hi, node_a, node_b, v0, e1, e2,
                           origins[r, 0], origins[r, 1], origins[r, 2],
                           dirs[r, 0], dirs[r, 1], dirs[r, 2], tmin, tmax)
        out_t[r] = t
        out_i[r] = i


def intersect_many(accel: AccelIndex, origins, dirs, t_min=0.0, t_max=np.inf):
    """Batch closest-hit query; returns (t, triangle_id) with t=inf / id=-1 on miss."""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    out_t = np.empty(len(origins))
    out_i = np.empty(len(origins), dtype=np.int64)
    _closest_batch(*accel.arrays(), origins, dirs, float(t_min), float(t_max), out_t, out_i)
    tri = np.where(out_i >= 0, accel.prim_ids[np.maximum(out_i, 0)], -1)
    return out_t, tri


def intersect(accel: AccelIndex, origin, dir, t_min: float = 0.0, t_max: float = np.inf) -> Optional[RayHit]:
    """Nearest hit with t in (t_min, t_max], normal facing the incoming ray."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(dir, dtype=np.float64)
    if not 0.0 <= t_min < t_max:
        raise GeometryError("need 0 <= t_min < t_max")
    t, i = closest_hit(*accel.arrays(), o[0], o[1], o[2], d[0], d[1], d[2], float(t_min), float(t_max))
    if i < 0:
        return None
    n = accel.normals[i].copy()
    if np.dot(n, d) > 0.0:
        n = -n
    return RayHit(t=float(t), point=o + t * d, geometric_normal=n,
                  triangle_id=int(accel.prim_ids[i]), material_id=int(accel.material_ids[i]))


def occluded(accel: AccelIndex, a, b) -> bool:
    """True if any triangle crosses the open segment (a, b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = b - a
    length = float(np.linalg.norm(d))
    if length == 0.0:
        raise GeometryError("segment endpoints coincide")
    d /= length
    return bool(any_hit(*accel.arrays(), a[0], a[1], a[2], d[0], d[1], d[2],
                        SEGMENT_EPS, length - SEGMENT_EPS))
