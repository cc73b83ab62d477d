import math

import numpy as np
import pytest

from conftest import wall_table
from radarsim.geometry import Pose, TriangleMesh, intersect_many
from radarsim.sampling import BeamModel
from radarsim.scenes import box, cylinder_room, quad, random_triangles, wall_x
from radarsim.tracer import (
    AIR_PATH, BACK_PATH, Scene, SensorModel, TraceConfig, TraceError, azimuth_directions,
    simulate_frame, trace_beam,
)
from radarsim.wave import Material, MaterialTable, fresnel_reflectance, lobe_factor

B10 = math.radians(10.0)
SPECULAR = Material("metal", 0.05, 0.0, 0.0, 20.0)


def sensor(kind="D3", n=64, n_az=16, res=0.05, bins=400):
    return SensorModel(n_azimuth=n_az, range_resolution=res, n_range_bins=bins,
                       beam=BeamModel(kind, B10, 0.9, n))


def two_walls_scene():
    walls = TriangleMesh.merge([wall_x(5.0), wall_x(-10.0)])
    return Scene(walls, wall_table(Material("wall", 0.1, 0.3, 0.3, 4.0)))


def clusters(ranges, gap):
    """Group sorted ranges into clusters separated by more than ``gap``."""
    r = np.sort(np.asarray(ranges))
    if r.size == 0:
        return []
    cuts = np.nonzero(np.diff(r) > gap)[0]
    groups = np.split(r, cuts + 1)
    return [(g.min(), g.max()) for g in groups]


def random_scene(rng, n=200):
    mesh = random_triangles(n, rng, extent=6.0)
    mats = [Material(f"m{i}", rng.uniform(0.03, 0.29), *(rng.uniform(0, 0.45, 2)), rng.uniform(0.5, 30))
            for i in range(3)]
    mesh = TriangleMesh(mesh.vertices, mesh.triangles, rng.integers(1, 4, len(mesh)).astype(np.int32))
    return Scene(mesh, MaterialTable.with_air(mats))


def test_empty_scene():
    scene = Scene(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), int)), wall_table())
    s = sensor()
    assert scene.is_empty
    assert trace_beam(scene, Pose(), 0, s, TraceConfig(), 1) == []
    img = simulate_frame(scene, Pose(), s, TraceConfig(), 1)
    assert img.data.shape == (400, 16) and not img.data.any()


def test_bad_inputs():
    scene = Scene(wall_x(5.0), wall_table())
    with pytest.raises(TraceError):
        trace_beam(scene, Pose(), 16, sensor(), TraceConfig(), 0)
    with pytest.raises(TraceError):
        TraceConfig(max_bounces=0)
    with pytest.raises(TraceError):
        Scene(wall_x(5.0, material_id=4), wall_table())


def test_single_wall_ranges():
    # a D2 cone of half-width 5 deg stretches the 10 m path by at most 3.8 cm
    scene = Scene(wall_x(10.0), wall_table(SPECULAR))
    s = sensor("D2", n=500, res=0.0438, bins=1000)
    sig = trace_beam(scene, Pose(), 0, s, TraceConfig(max_bounces=1), 3)
    r = np.array([x.apparent_range for x in sig])
    assert len(sig) == 500
    assert np.all(np.abs(r - 10.0) <= s.range_resolution)
    assert all(x.path == BACK_PATH and x.bounces == 1 for x in sig)


def test_single_bounce_energy_matches_closed_form():
    # per ray: f_rx * Fresnel(theta) * lobe(2 theta) * E / N_s
    m = Material("wall", 0.1, 0.25, 0.35, 8.0)
    scene = Scene(wall_x(6.0), wall_table(m))
    s = sensor("D3", n=300)
    cfg = TraceConfig(max_bounces=1, f_rx=0.05)
    sig = trace_beam(scene, Pose(), 0, s, cfg, 9)
    dirs = azimuth_directions(np.eye(3), s, 0, 9)
    theta = np.arccos(np.abs(dirs[:, 0]))
    expected = [0.05 * fresnel_reflectance(math.cos(t), 0.299792458, 0.1)
                * lobe_factor(min(2 * t, math.pi / 2), m.A, m.B, m.C) / 300 for t in theta]
    assert sum(x.energy for x in sig) == pytest.approx(sum(expected), rel=1e-12)
    np.testing.assert_allclose([x.apparent_range for x in sig], 6.0 / np.cos(theta), rtol=1e-12)


def test_first_hit_distance_with_one_bounce(rng):
    scene = random_scene(rng)
    s = sensor("D3", n=200)
    origin = np.array([0.3, -0.2, 0.1])
    for a in (0, 5, 11):
        sig = trace_beam(scene, Pose(origin), a, s, TraceConfig(max_bounces=1), 4)
        dirs = azimuth_directions(np.eye(3), s, a, 4)
        t, tri = intersect_many(scene.accel, np.tile(origin, (len(dirs), 1)), dirs)
        t = t[(tri >= 0) & (t <= 2 * s.max_range)]
        assert sorted(x.apparent_range for x in sig) == pytest.approx(sorted(t), abs=1e-12)


@pytest.mark.parametrize("max_bounces", [1, 2, 4])
def test_depth_bound_and_energy_budget(rng, max_bounces):
    s = sensor("D3", n=100)
    for _ in range(3):
        scene = random_scene(rng)
        cfg = TraceConfig(max_bounces=max_bounces, f_rx=0.9, min_energy=1e-9)
        for a in range(0, 16, 3):
            sig = trace_beam(scene, Pose(), a, s, cfg, 21)
            assert all(1 <= x.bounces <= max_bounces for x in sig)
            assert all(x.energy > 0 for x in sig)
            assert sum(x.energy for x in sig) <= cfg.total_emitted_energy * (1 + 1e-12)


def test_energy_budget_closed_room():
    # a closed box with high f_rx: every ray keeps bouncing until max_bounces
    scene = Scene(box((-3, -2, -1.5), (3, 2, 1.5)), wall_table(Material("w", 0.02, 0.45, 0.45, 2.0)))
    cfg = TraceConfig(max_bounces=8, f_rx=1.0, min_energy=1e-12, total_emitted_energy=2.5)
    for a in range(4):
        sig = trace_beam(scene, Pose(), a, sensor(n=50), cfg, 2)
        total = sum(x.energy for x in sig)
        assert 0 < total <= 2.5 * (1 + 1e-12)
        assert any(x.path == AIR_PATH for x in sig)


def path_tree_clusters(scene, s, cfg, seed, azimuths):
    """(leading edge, energy-peak range) of each apparent-range cluster inside max_range."""
    sig = [x for a in azimuths for x in trace_beam(scene, Pose(), a, s, cfg, seed)
           if x.apparent_range < s.max_range]
    r = np.array([x.apparent_range for x in sig])
    e = np.array([x.energy for x in sig])
    out = []
    for lo, hi in clusters(r, gap=0.5):
        m = (r >= lo) & (r <= hi)
        bins = np.floor(r[m] / s.range_resolution).astype(int)
        energy = np.bincount(bins - bins.min(), weights=e[m])
        out.append((lo, (bins.min() + np.argmax(energy)) * s.range_resolution))
    return out


def test_two_walls_path_tree():
    # walls at x=+5 and x=-10: direct 5 and 10, air-path multipath (5 + 15 + 10) / 2 = 15;
    # the depth-2 back paths at 20 and 25 lie beyond max_range = 18
    s = SensorModel(n_azimuth=400, range_resolution=0.05, n_range_bins=360,
                    beam=BeamModel("D2", B10, 0.9, 200))
    cl = path_tree_clusters(two_walls_scene(), s, TraceConfig(max_bounces=2), 5, (0, 200))
    assert len(cl) == 3
    for (edge, peak), ref in zip(cl, (5.0, 10.0, 15.0)):
        assert abs(edge - ref) <= s.range_resolution
        assert abs(peak - ref) <= s.range_resolution * (1 + 1e-9)


def test_thread_count_does_not_change_output(rng):
    scene = random_scene(rng, 400)
    s = sensor(n=40, n_az=64)
    cfg = TraceConfig(max_bounces=3)
    a = simulate_frame(scene, Pose.from_xyz_yaw(0.2, 0.1, 0, 0.4), s, cfg, 77, threads=1)
    b = simulate_frame(scene, Pose.from_xyz_yaw(0.2, 0.1, 0, 0.4), s, cfg, 77, threads=8)
    assert a.data.tobytes() == b.data.tobytes()
    c = simulate_frame(scene, Pose.from_xyz_yaw(0.2, 0.1, 0, 0.4), s, cfg, 78, threads=1)
    assert not np.array_equal(a.data, c.data)


def test_frame_matches_trace_beam():
    scene = two_walls_scene()
    s = sensor(n=30, n_az=8, bins=300)
    cfg = TraceConfig(max_bounces=2)
    img = simulate_frame(scene, Pose(), s, cfg, 3)
    for a in range(8):
        col = np.zeros(300)
        for x in trace_beam(scene, Pose(), a, s, cfg, 3):
            b = int(x.apparent_range // s.range_resolution)
            if b < 300:
                col[b] += x.energy
        np.testing.assert_allclose(img.column(a), col, rtol=1e-12, atol=0)


def test_cylinder_rotational_symmetry():
    scene = Scene(cylinder_room(8.0, 4.0, 400), wall_table())
    s = SensorModel(n_azimuth=100, range_resolution=0.05, n_range_bins=400,
                    beam=BeamModel("D3", B10, 0.9, 200))
    img = simulate_frame(scene, Pose(), s, TraceConfig(), 8)
    cols = img.data.sum(axis=0)
    assert cols.min() > 0
    assert cols.std() / cols.mean() < 0.10


def test_mirror_symmetry():
    rng = np.random.default_rng(3)
    room = box((-6, -4, -1.5), (7, 5, 1.5))
    props = [box(c - 0.4, c + 0.4) for c in rng.uniform([-4, -3, -1], [5, 4, 1], (6, 3))]
    mesh = TriangleMesh.merge([room] + props)
    flip = np.diag([1.0, -1.0, 1.0])
    mirrored = TriangleMesh(mesh.vertices @ flip, mesh.triangles, mesh.material_ids)
    s = SensorModel(n_azimuth=120, range_resolution=0.05, n_range_bins=300,
                    beam=BeamModel("D3", B10, 0.9, 200))
    cfg = TraceConfig(max_bounces=2)
    mats = wall_table()
    a = simulate_frame(Scene(mesh, mats), Pose([0.5, 0.3, 0]), s, cfg, 1).data
    b = simulate_frame(Scene(mirrored, mats), Pose([0.5, -0.3, 0]), s, cfg, 1).data
    b = b[:, (-np.arange(120)) % 120]
    ca, cb = a.sum(0), b.sum(0)
    assert abs(ca.sum() - cb.sum()) / ca.sum() < 0.05
    assert np.corrcoef(ca, cb)[0, 1] > 0.9
    # and the range profiles line up
    assert np.corrcoef(a.sum(1), b.sum(1))[0, 1] > 0.95


def test_lidar_like_preset():
    scene = Scene(TriangleMesh.merge([wall_x(4.0), wall_x(-9.0)]), wall_table())
    s = sensor(n=50, n_az=4, res=0.05, bins=400)
    cfg = TraceConfig(lidar_like=True, max_bounces=4, f_rx=0.05)
    sig = trace_beam(scene, Pose(), 0, s, cfg, 1)
    assert len(sig) == 1
    assert sig[0].apparent_range == pytest.approx(4.0)
    assert sig[0].energy == pytest.approx(0.05)
    img = simulate_frame(scene, Pose(), s, cfg, 1)
    assert np.count_nonzero(img.data) == 2   # azimuths 0 and pi only
    # material independent
    other = Scene(scene.mesh, wall_table(Material("glass", 0.2, 0.0, 0.0, 50.0)))
    assert np.array_equal(simulate_frame(other, Pose(), s, cfg, 1).data, img.data)


def test_return_leg_attenuation():
    scene = Scene(quad((5.0, 0, 0), (-1, 0, 0), 3.0, 3.0), wall_table())
    s = sensor("D2", n=100)
    plain = trace_beam(scene, Pose(), 0, s, TraceConfig(max_bounces=1), 2)
    att = trace_beam(scene, Pose(), 0, s, TraceConfig(max_bounces=1, return_leg_attenuation=True), 2)
    for p, q in zip(plain, att):
        assert q.energy == pytest.approx(p.energy / p.apparent_range ** 2, rel=1e-12)


def test_small_plate_inverse_fourth_power():
    e = []
    ranges = np.array([5.0, 10.0, 20.0])
    s = SensorModel(400, 0.05, 1000, BeamModel("D2", B10, 0.9, 100_000))
    for R in ranges:
        scene = Scene(quad((R, 0, 0), (-1, 0, 0), 0.1, 0.1), wall_table(SPECULAR))
        sig = trace_beam(scene, Pose(), 0, s, TraceConfig(max_bounces=1, return_leg_attenuation=True), 3)
        e.append(sum(x.energy for x in sig))
    slope = np.polyfit(np.log(ranges), np.log(e), 1)[0]
    assert abs(slope + 4) < 0.4
    scaled = np.array(e) * ranges ** 4
    assert scaled.max() / scaled.min() < 1.2
