import math

import numpy as np
import pytest

from radarsim.config import OutputConfig, SimConfig
from radarsim.geometry import Pose
from radarsim.noise import NoiseConfig, NoiseModel
from radarsim.sampling import BeamModel
from radarsim.scenes import box_room
from radarsim.tracer import Scene, SensorModel, TraceConfig
from radarsim.wave import Material, MaterialTable

WALL = Material("wall", 0.1, 0.25, 0.35, 8.0)
BOX_ROOM_POSE = Pose.from_xyz_yaw(1.0, 0.5, 0.0, 0.3)


def wall_table(m: Material = WALL) -> MaterialTable:
    return MaterialTable.with_air([m])


def box_room_config(n_samples: int = 50, n_azimuth: int = 400) -> SimConfig:
    """12 x 8 x 3 m room of one material, small-noise log output."""
    scene = Scene(box_room((12.0, 8.0, 3.0)), wall_table())
    sensor = SensorModel(n_azimuth=n_azimuth, range_resolution=0.05, n_range_bins=200,
                         beam=BeamModel("D3", math.radians(10.0), 0.9, n_samples))
    noise = NoiseConfig(2.0, NoiseModel("uniform", 1e-5), NoiseModel("perlin", 1e-5, 0.05, 0.05))
    return SimConfig(scene, sensor, TraceConfig(), noise, OutputConfig(16, "log"))


@pytest.fixture(scope="session")
def box_room_cfg():
    return box_room_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_box_config(tmp_path, extra: str = "", n_samples: int = 20, n_azimuth: int = 64):
    """A unit-box OBJ plus a YAML config referencing it; returns the config path."""
    from radarsim.meshio import write_obj
    from radarsim.scenes import box

    m = box((-4.0, -3.0, -1.5), (4.0, 3.0, 1.5))
    write_obj(tmp_path / "room.obj", m.vertices, m.triangles)
    text = f"""\
seed: 11
materials:
  - {{name: wall, velocity: 0.1, A: 0.25, B: 0.35, C: 8.0}}
objects:
  - {{mesh: room.obj, material: wall}}
sensor:
  n_azimuth: {n_azimuth}
  range_resolution: 0.05
  n_range_bins: 120
  beam: {{kind: D3, width_deg: 10.0, inside_prob: 0.9, n_samples: {n_samples}}}
noise:
  range_blur_sigma: 1.0
  system: {{kind: uniform, amplitude: 1.0e-5}}
  ambient: {{kind: perlin, amplitude: 1.0e-5, freq_az: 0.05, freq_range: 0.05}}
output: {{bit_depth: 16, scale: log}}
{extra}"""
    path = tmp_path / "scene.yaml"
    path.write_text(text)
    return path


def write_trajectory(path, n: int = 3):
    lines = ["# t tx ty tz qx qy qz qw"]
    for i in range(n):
        yaw = 0.1 * i
        lines.append(f"{0.25 * i} {0.3 * i} {-0.2 * i} 0 0 0 {math.sin(yaw / 2)} {math.cos(yaw / 2)}")
    path.write_text("\n".join(lines) + "\n")
    return path


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
