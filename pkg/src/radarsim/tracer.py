"""Beam tracing for a rotating FMCW radar.

Each azimuth emits ``n_samples`` rays drawn from the beam model. A ray that
hits a surface is split by the Fresnel reflectance into a reflected and a
refracted part; both continue as child rays until ``max_bounces`` surface
interactions or the energy floor is reached. At every hit the reflection
lobe is evaluated towards the receiver along two return paths:

* back path: retracing the travelled path, lobe angle between the mean
  reflection and the reversed incoming ray;
* air path: straight from the hit point to the sensor (only from the
  second bounce on, only in air, only if unoccluded).

Columns are independent; a frame is traced by splitting azimuths over a
thread pool running the nogil kernel.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numba as nb
import numpy as np

from .geometry import AccelIndex, Pose, SPAWN_EPS, SEGMENT_EPS, TriangleMesh, any_hit, build_accel, closest_hit
from .imaging import PolarImage
from .sampling import BeamModel, beam_offsets, offsets_to_directions
from .wave import MaterialTable, fresnel_reflectance, lobe_factor

BACK_PATH = 0
AIR_PATH = 1


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TraceConfig:
    max_bounces: int = 4
    min_energy: float = 1e-4
    total_emitted_energy: float = 1.0
    return_leg_attenuation: bool = False
    lidar_like: bool = False
    f_rx: float = 0.05

    def __post_init__(self):
        if int(self.max_bounces) < 1:
            raise TraceError("max_bounces must be >= 1")
        if not self.min_energy > 0.0:
            raise TraceError("min_energy must be > 0")
        if not self.total_emitted_energy > 0.0:
            raise TraceError("total_emitted_energy must be > 0")
        if not self.f_rx >= 0.0:
            raise TraceError("f_rx must be >= 0")


@dataclass(frozen=True)
class SensorModel:
    n_azimuth: int = 400
    range_resolution: float = 0.0438
    n_range_bins: int = 1000
    beam: BeamModel = field(default_factory=BeamModel)
    mount: Pose = field(default_factory=Pose)

    def __post_init__(self):
        if int(self.n_azimuth) < 1:
            raise TraceError("n_azimuth must be >= 1")
        if not self.range_resolution > 0.0:
            raise TraceError("range_resolution must be > 0")
        if int(self.n_range_bins) < 1:
            raise TraceError("n_range_bins must be >= 1")

    @property
    def max_range(self) -> float:
        return self.n_range_bins * self.range_resolution


@dataclass(frozen=True)
class ReturnSignal:
    apparent_range: float
    energy: float
    bounces: int = 1
    path: int = BACK_PATH


class Scene:
    """Mesh + materials + acceleration index; read-only while tracing."""

    def __init__(self, mesh: TriangleMesh, materials: MaterialTable):
        if len(mesh) and (mesh.material_ids.min() < 0 or mesh.material_ids.max() >= len(materials)):
            raise TraceError("triangle material id does not index the material table")
        self.mesh = mesh
        self.materials = materials
        self.accel: Optional[AccelIndex] = build_accel(mesh) if len(mesh) else None

    @property
    def is_empty(self) -> bool:
        return self.accel is None

    def with_materials(self, materials: MaterialTable) -> "Scene":
        """Same geometry (and BVH) with a different material table."""
        if len(materials) != len(self.materials):
            raise TraceError("material table size changed")
        out = object.__new__(Scene)
        out.mesh = self.mesh
        out.materials = materials
        out.accel = self.accel
        return out


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------

@nb.njit(cache=True, nogil=True, error_model="numpy")
def _trace_rays(node_lo, node_hi, node_a, node_b, v0, e1, e2, normals, tri_mat,
                mat_v, mat_a, mat_b, mat_c,
                sensor, dirs, ray_energy, max_bounces, min_abs, f_rx, attenuate, lidar,
                range_res, column, rec_range, rec_energy, rec_bounce, rec_path):
    """Trace all rays of one azimuth into ``column``.

    Returns the number of signals produced; only the first len(rec_range)
    are recorded.
    """
    n_bins = column.shape[0]
    max_path = 2.0 * n_bins * range_res
    cap = rec_range.shape[0]
    n_rec = 0
    depth_cap = 2 * max_bounces + 4
    st_o = np.empty((depth_cap, 3))
    st_d = np.empty((depth_cap, 3))
    st_e = np.empty(depth_cap)
    st_path = np.empty(depth_cap)
    st_depth = np.empty(depth_cap, dtype=np.int64)
    st_med = np.empty(depth_cap, dtype=np.int64)
    sx = sensor[0]
    sy = sensor[1]
    sz = sensor[2]
    half_pi = 0.5 * math.pi

    for r in range(dirs.shape[0]):
        sp = 0
        st_o[0, 0] = sx
        st_o[0, 1] = sy
        st_o[0, 2] = sz
        st_d[0, 0] = dirs[r, 0]
        st_d[0, 1] = dirs[r, 1]
        st_d[0, 2] = dirs[r, 2]
        st_e[0] = ray_energy
        st_path[0] = 0.0
        st_depth[0] = 0
        st_med[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            ox = st_o[sp, 0]; oy = st_o[sp, 1]; oz = st_o[sp, 2]
            dx = st_d[sp, 0]; dy = st_d[sp, 1]; dz = st_d[sp, 2]
            energy = st_e[sp]
            path = st_path[sp]
            depth = st_depth[sp]
            medium = st_med[sp]
            tmin = 0.0 if depth == 0 else SPAWN_EPS
            t, tri = closest_hit(node_lo, node_hi, node_a, node_b, v0, e1, e2,
                                 ox, oy, oz, dx, dy, dz, tmin, max_path - path)
            if tri < 0:
                continue
            depth += 1
            path += t
            hx = ox + t * dx; hy = oy + t * dy; hz = oz + t * dz
            nx = normals[tri, 0]; ny = normals[tri, 1]; nz = normals[tri, 2]
            dn = dx * nx + dy * ny + dz * nz
            if dn > 0.0:
                nx = -nx; ny = -ny; nz = -nz
                dn = -dn
            cos0 = -dn
            surf = tri_mat[tri]
            if medium == 0:
                next_med = surf
                lobe = surf
            elif surf == medium:
                next_med = 0
                lobe = medium
            else:
                next_med = surf
                lobe = surf
            v_in = mat_v[medium]
            v_out = mat_v[next_med]

            if lidar:
                refl = 1.0
            else:
                refl = fresnel_reflectance(cos0, v_in, v_out)
            E1 = refl * energy
            E2 = energy - E1

            # mirror direction
            rx = dx - 2.0 * dn * nx
            ry = dy - 2.0 * dn * ny
            rz = dz - 2.0 * dn * nz

            # back path: lobe angle between mirror dir and reversed incoming ray
            c = -(rx * dx + ry * dy + rz * dz)
            c = min(max(c, -1.0), 1.0)
            w_back = min(math.acos(c), half_pi)
            if lidar:
                e_back = f_rx * E1
            else:
                e_back = f_rx * E1 * lobe_factor(w_back, mat_a[lobe], mat_b[lobe], mat_c[lobe])
            if attenuate:
                e_back /= path * path
            range_back = path

            e_air = 0.0
            range_air = 0.0
            if (not lidar) and depth >= 2 and medium == 0:
                tx = sx - hx; ty = sy - hy; tz = sz - hz
                dist = math.sqrt(tx * tx + ty * ty + tz * tz)
                if dist > SEGMENT_EPS * 2.0:
                    tx /= dist; ty /= dist; tz /= dist
                    if tx * nx + ty * ny + tz * nz > 0.0:
                        if not any_hit(node_lo, node_hi, node_a, node_b, v0, e1, e2,
                                       hx, hy, hz, tx, ty, tz, SEGMENT_EPS, dist - SEGMENT_EPS):
                            c = rx * tx + ry * ty + rz * tz
                            c = min(max(c, -1.0), 1.0)
                            w_air = min(math.acos(c), half_pi)
                            e_air = f_rx * E1 * lobe_factor(w_air, mat_a[lobe], mat_b[lobe], mat_c[lobe])
                            if attenuate:
                                e_air /= dist * dist
                            range_air = 0.5 * (path + dist)

            # returns are drawn from the reflected share and never exceed it
            total_ret = e_back + e_air
            if total_ret > E1:
                if total_ret == np.inf:
                    e_back = E1 if e_back == np.inf else 0.0
                    e_air = E1 - e_back if e_air == np.inf else 0.0
                else:
                    s = E1 / total_ret
                    e_back *= s
                    e_air *= s
                total_ret = E1

            if e_back > 0.0:
                b = int(math.floor(range_back / range_res))
                if b < n_bins:
                    column[b] += e_back
                if n_rec < cap:
                    rec_range[n_rec] = range_back
                    rec_energy[n_rec] = e_back
                    rec_bounce[n_rec] = depth
                    rec_path[n_rec] = 0
                n_rec += 1
            if e_air > 0.0:
                b = int(math.floor(range_air / range_res))
                if b < n_bins:
                    column[b] += e_air
                if n_rec < cap:
                    rec_range[n_rec] = range_air
                    rec_energy[n_rec] = e_air
                    rec_bounce[n_rec] = depth
                    rec_path[n_rec] = 1
                n_rec += 1

            if depth >= max_bounces or lidar:
                continue
            # refraction child
            if E2 >= min_abs:
                eta = v_out / v_in
                sin2_sq = eta * eta * max(0.0, 1.0 - cos0 * cos0)
                if sin2_sq < 1.0:
                    cos2 = math.sqrt(1.0 - sin2_sq)
                    k = eta * cos0 - cos2
                    qx = eta * dx + k * nx
                    qy = eta * dy + k * ny
                    qz = eta * dz + k * nz
                    qn = math.sqrt(qx * qx + qy * qy + qz * qz)
                    st_o[sp, 0] = hx; st_o[sp, 1] = hy; st_o[sp, 2] = hz
                    st_d[sp, 0] = qx / qn; st_d[sp, 1] = qy / qn; st_d[sp, 2] = qz / qn
                    st_e[sp] = E2
                    st_path[sp] = path
                    st_depth[sp] = depth
                    st_med[sp] = next_med
                    sp += 1
            # reflection child
            e_child = E1 - total_ret
            if e_child >= min_abs:
                st_o[sp, 0] = hx; st_o[sp, 1] = hy; st_o[sp, 2] = hz
                st_d[sp, 0] = rx; st_d[sp, 1] = ry; st_d[sp, 2] = rz
                st_e[sp] = e_child
                st_path[sp] = path
                st_depth[sp] = depth
                st_med[sp] = medium
                sp += 1
    return n_rec


@nb.njit(cache=True, nogil=True)
def _trace_columns(node_lo, node_hi, node_a, node_b, v0, e1, e2, normals, tri_mat,
                   mat_v, mat_a, mat_b, mat_c, sensor, dirs, ray_energy, max_bounces, min_abs,
                   f_rx, attenuate, lidar, range_res, image, col_start, col_end):
    dummy_f = np.empty(0)
    dummy_i = np.empty(0, dtype=np.int64)
    for a in range(col_start, col_end):
        column = np.zeros(image.shape[0])
        _trace_rays(node_lo, node_hi, node_a, node_b, v0, e1, e2, normals, tri_mat,
                    mat_v, mat_a, mat_b, mat_c, sensor, dirs[a], ray_energy, max_bounces, min_abs,
                    f_rx, attenuate, lidar, range_res, column, dummy_f, dummy_f, dummy_i, dummy_i)
        image[:, a] = column


# ---------------------------------------------------------------------------
# Python-level API
# ---------------------------------------------------------------------------

def effective_config(cfg: TraceConfig) -> TraceConfig:
    if cfg.lidar_like:
        return replace(cfg, max_bounces=1)
    return cfg


def sensor_frame(robot_pose: Pose, sensor: SensorModel):
    pose = robot_pose.compose(sensor.mount)
    rot = pose.rotation
    return pose.position, rot


def azimuth_directions(sensor_rot, sensor: SensorModel, azimuth_index: int, seed: int,
                       lidar_like: bool = False) -> np.ndarray:
    """Sampled ray directions for one azimuth, shape (n, 3)."""
    ang = 2.0 * math.pi * azimuth_index / sensor.n_azimuth
    boresight = sensor_rot @ np.array([math.cos(ang), math.sin(ang), 0.0])
    up = sensor_rot[:, 2]
    if lidar_like:
        return boresight.reshape(1, 3)
    offsets = beam_offsets(sensor.beam, seed, azimuth_index)
    return offsets_to_directions(boresight, up, offsets)


def _kernel_args(scene: Scene):
    acc = scene.accel
    mv, ma, mb, mc = scene.materials.arrays()
    return (acc.node_lo, acc.node_hi, acc.node_a, acc.node_b, acc.v0, acc.e1, acc.e2,
            acc.normals, acc.material_ids, mv, ma, mb, mc)


def _ray_energy(cfg: TraceConfig, n_rays: int) -> float:
    return cfg.total_emitted_energy / n_rays


def trace_beam(scene: Scene, sensor_pose: Pose, azimuth_index: int, sensor: SensorModel,
               cfg: TraceConfig, seed: int) -> List[ReturnSignal]:
    """All return signals of one azimuth, in emission order."""
    if not 0 <= azimuth_index < sensor.n_azimuth:
        raise TraceError(f"azimuth index {azimuth_index} outside [0, {sensor.n_azimuth})")
    if scene.is_empty:
        return []
    cfg = effective_config(cfg)
    origin = sensor_pose.position
    rot = sensor_pose.rotation
    dirs = azimuth_directions(rot, sensor, azimuth_index, seed, cfg.lidar_like)
    e_ray = _ray_energy(cfg, len(dirs))
    cap = len(dirs) * 2 * (2 ** min(cfg.max_bounces, 20)) + 2
    cap = min(cap, 4_000_000)
    while True:
        column = np.zeros(sensor.n_range_bins)
        rr = np.empty(cap)
        re = np.empty(cap)
        rb = np.empty(cap, dtype=np.int64)
        rp = np.empty(cap, dtype=np.int64)
        n = _trace_rays(*_kernel_args(scene), np.ascontiguousarray(origin, dtype=np.float64),
                        np.ascontiguousarray(dirs), e_ray, int(cfg.max_bounces),
                        cfg.min_energy * e_ray, cfg.f_rx, bool(cfg.return_leg_attenuation),
                        bool(cfg.lidar_like), sensor.range_resolution, column, rr, re, rb, rp)
        if n <= cap:
            break
        cap = n
    return [ReturnSignal(float(rr[i]), float(re[i]), int(rb[i]), int(rp[i])) for i in range(n)]


def simulate_frame(scene: Scene, robot_pose: Pose, sensor: SensorModel, cfg: TraceConfig,
                   seed: int, threads: int = 1) -> PolarImage:
    """Trace every azimuth and assemble the raw (noise-free) polar image."""
    image = np.zeros((sensor.n_range_bins, sensor.n_azimuth))
    meta = dict(range_resolution=sensor.range_resolution, seed=int(seed))
    if scene.is_empty:
        return PolarImage(image, **meta)
    cfg = effective_config(cfg)
    origin, rot = sensor_frame(robot_pose, sensor)
    dirs = np.stack([azimuth_directions(rot, sensor, a, seed, cfg.lidar_like)
                     for a in range(sensor.n_azimuth)])
    dirs = np.ascontiguousarray(dirs)
    e_ray = _ray_energy(cfg, dirs.shape[1])
    args = _kernel_args(scene) + (np.ascontiguousarray(origin, dtype=np.float64), dirs, e_ray,
                                  int(cfg.max_bounces), cfg.min_energy * e_ray, cfg.f_rx,
                                  bool(cfg.return_leg_attenuation), bool(cfg.lidar_like),
                                  sensor.range_resolution, image)
    threads = max(1, int(threads))
    if threads == 1:
        _trace_columns(*args, 0, sensor.n_azimuth)
    else:
        bounds = np.linspace(0, sensor.n_azimuth, min(threads * 4, sensor.n_azimuth) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_trace_columns, *args, int(s), int(e))
                       for s, e in zip(bounds[:-1], bounds[1:]) if e > s]
            for f in futures:
                f.result()
    return PolarImage(image, **meta)
