"""Scene configuration files and trajectories.

A scene config is a YAML document::

    seed: 7
    materials:
      - {name: wall, velocity: 0.1, A: 0.25, B: 0.35, C: 8.0}
    objects:
      - mesh: room.obj               # relative to the config file
        material: wall               # whole mesh, or:
        # materials: {brick: wall}   # OBJ usemtl name -> table name
        transform: {translation: [0, 0, 0], rotation: [0, 0, 0, 1], scale: 1.0}
    sensor:
      n_azimuth: 400
      range_resolution: 0.0438
      n_range_bins: 1000
      beam: {kind: D3, width_deg: 10.0, inside_prob: 0.9, n_samples: 50}
      mount: {translation: [0, 0, 0], rotation: [0, 0, 0, 1]}
    trace: {max_bounces: 4, min_energy: 1.0e-4, total_emitted_energy: 1.0,
            return_leg_attenuation: false, lidar_like: false, f_rx: 0.05}
    noise:
      range_blur_sigma: 2.0
      system: {kind: uniform, amplitude: 0.0}
      ambient: {kind: perlin, amplitude: 0.0, freq_az: 0.05, freq_range: 0.02}
    output: {bit_depth: 16, scale: log, v_scale: null}
    calibration:
      params:
        - {name: material.wall.A, lower: 0.0, upper: 0.9, initial: 0.5}
      max_evals: 200
      tolerance: 1.0e-6

Trajectories are text files with one ``t tx ty tz qx qy qz qw`` record per
line; ``#`` starts a comment.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .calibration import Param, ParamSpec
from .geometry import Pose, TriangleMesh
from .imaging import PolarImage, quantize
from .meshio import load_mesh
from .noise import NoiseConfig, NoiseModel, add_noise
from .sampling import BeamModel
from .tracer import Scene, SensorModel, TraceConfig, simulate_frame
from .wave import Material, MaterialTable


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class OutputConfig:
    bit_depth: int = 16
    scale: str = "log"
    v_scale: Optional[float] = None

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ValueError("bit_depth must be 8 or 16")
        if self.scale not in ("linear", "log"):
            raise ValueError("scale must be 'linear' or 'log'")


@dataclass(frozen=True)
class ObjectSpec:
    mesh: str
    material: Optional[str] = None
    materials: Optional[Dict[str, str]] = None
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)
    scale: float = 1.0


@dataclass
class SimConfig:
    """A fully validated simulation setup, ready to render frames."""

    scene: Scene
    sensor: SensorModel = field(default_factory=SensorModel)
    trace: TraceConfig = field(default_factory=TraceConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    objects: List[ObjectSpec] = field(default_factory=list)
    calibration: Dict[str, Any] = field(default_factory=dict)
    base_dir: Path = Path(".")

    @property
    def materials(self) -> MaterialTable:
        return self.scene.materials

    def render(self, robot_pose: Pose, seed: int, threads: int = 1, noise: bool = True) -> PolarImage:
        """Trace one frame and apply the noise stages (skipped for lidar-like)."""
        img = simulate_frame(self.scene, robot_pose, self.sensor, self.trace, seed, threads=threads)
        if noise and not self.trace.lidar_like:
            img = add_noise(img, self.noise, seed=seed)
        return img

    def quantize(self, img: PolarImage) -> np.ndarray:
        return quantize(img, self.output.bit_depth, self.output.scale, v_scale=self.output.v_scale)

    def lidar_like(self) -> "SimConfig":
        """Baseline preset: mean ray only, one bounce, no noise, unit reflectance."""
        return replace(self, trace=replace(self.trace, lidar_like=True, max_bounces=1))

    def with_materials(self, materials: MaterialTable) -> "SimConfig":
        return replace(self, scene=self.scene.with_materials(materials))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _section(doc: dict, key: str) -> dict:
    val = doc.get(key) or {}
    if not isinstance(val, dict):
        raise ConfigError(key, "must be a mapping")
    return val


def _build(path: str, ctor, **kwargs):
    try:
        return ctor(**kwargs)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None


def _check_keys(path: str, section: dict, allowed) -> None:
    extra = set(section) - set(allowed)
    if extra:
        raise ConfigError(path, f"unknown keys {sorted(extra)}")


def _parse_pose(path: str, d: dict) -> Pose:
    _check_keys(path, d, ("translation", "rotation"))
    t = d.get("translation", [0.0, 0.0, 0.0])
    q = np.asarray(d.get("rotation", [0.0, 0.0, 0.0, 1.0]), dtype=np.float64)
    if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-3:
        raise ConfigError(f"{path}.rotation", "must be a unit quaternion [qx, qy, qz, qw]")
    return _build(path, Pose, position=np.asarray(t, dtype=np.float64), orientation=q / np.linalg.norm(q))


def _parse_noise_model(path: str, d: dict, default_kind: str) -> NoiseModel:
    _check_keys(path, d, ("kind", "amplitude", "freq_az", "freq_range"))
    d = dict(d)
    d.setdefault("kind", default_kind)
    return _build(path, NoiseModel, **d)


def parse_config(doc: dict, base_dir=".") -> SimConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a mapping")
    base_dir = Path(base_dir)
    _check_keys("<root>", doc, ("seed", "materials", "objects", "sensor", "trace", "noise",
                                "output", "calibration"))

    mats = []
    for i, m in enumerate(doc.get("materials") or []):
        path = f"materials[{i}]"
        if not isinstance(m, dict):
            raise ConfigError(path, "must be a mapping")
        _check_keys(path, m, ("name", "velocity", "A", "B", "C"))
        if "name" not in m or "velocity" not in m:
            raise ConfigError(path, "needs 'name' and 'velocity'")
        A = float(m.get("A", 0.0))
        B = float(m.get("B", 0.0))
        if not A + B < 1.0:
            raise ConfigError(f"{path}.A+B", f"constraint A+B < 1 violated (A={A}, B={B})")
        mats.append(_build(path, Material, name=str(m["name"]), velocity=float(m["velocity"]),
                           A=A, B=B, C=float(m.get("C", 1.0))))
    try:
        table = MaterialTable.with_air(mats)
    except ValueError as exc:
        raise ConfigError("materials", str(exc)) from None

    objects = []
    meshes = []
    for i, o in enumerate(doc.get("objects") or []):
        path = f"objects[{i}]"
        if not isinstance(o, dict) or "mesh" not in o:
            raise ConfigError(path, "needs a 'mesh' entry")
        _check_keys(path, o, ("mesh", "material", "materials", "transform"))
        tf = o.get("transform") or {}
        _check_keys(f"{path}.transform", tf, ("translation", "rotation", "scale"))
        pose = _parse_pose(f"{path}.transform", {k: v for k, v in tf.items() if k != "scale"})
        spec = ObjectSpec(mesh=str(o["mesh"]), material=o.get("material"), materials=o.get("materials"),
                          translation=tuple(float(x) for x in pose.position),
                          rotation=tuple(float(x) for x in pose.orientation),
                          scale=float(tf.get("scale", 1.0)))
        mesh_path = base_dir / spec.mesh
        if not mesh_path.is_file():
            raise ConfigError(f"{path}.mesh", f"file not found: {mesh_path}")
        try:
            verts, tris, groups = load_mesh(mesh_path)
        except ValueError as exc:
            raise ConfigError(f"{path}.mesh", str(exc)) from None
        mat_ids = np.empty(len(tris), dtype=np.int32)
        for k, g in enumerate(groups):
            name = None
            if spec.materials and g in spec.materials:
                name = spec.materials[g]
            elif spec.material is not None:
                name = spec.material
            if name is None:
                raise ConfigError(f"{path}.materials", f"no material bound for OBJ group {g!r}")
            try:
                mat_ids[k] = table.index(name)
            except ValueError:
                raise ConfigError(f"{path}.material", f"unknown material {name!r}") from None
            if mat_ids[k] == 0:
                raise ConfigError(f"{path}.material", "objects cannot be made of air")
        mesh = TriangleMesh(verts * spec.scale, tris, mat_ids).transformed(pose).drop_degenerate()
        objects.append(spec)
        meshes.append(mesh)
    scene = Scene(TriangleMesh.merge(meshes), table)

    s = _section(doc, "sensor")
    _check_keys("sensor", s, ("n_azimuth", "range_resolution", "n_range_bins", "beam", "mount"))
    b = _section(s, "beam")
    _check_keys("sensor.beam", b, ("kind", "width_deg", "inside_prob", "n_samples"))
    beam = _build("sensor.beam", BeamModel, kind=b.get("kind", "D3"),
                  width_b=math.radians(float(b.get("width_deg", 10.0))),
                  inside_prob_P=float(b.get("inside_prob", 0.9)), n_samples=int(b.get("n_samples", 50)))
    mount = _parse_pose("sensor.mount", _section(s, "mount"))
    sensor = _build("sensor", SensorModel, n_azimuth=int(s.get("n_azimuth", 400)),
                    range_resolution=float(s.get("range_resolution", 0.0438)),
                    n_range_bins=int(s.get("n_range_bins", 1000)), beam=beam, mount=mount)

    t = _section(doc, "trace")
    _check_keys("trace", t, ("max_bounces", "min_energy", "total_emitted_energy",
                             "return_leg_attenuation", "lidar_like", "f_rx"))
    trace = _build("trace", TraceConfig, **t)

    n = _section(doc, "noise")
    _check_keys("noise", n, ("range_blur_sigma", "system", "ambient"))
    noise = _build("noise", NoiseConfig, range_blur_sigma=float(n.get("range_blur_sigma", 2.0)),
                   system_noise=_parse_noise_model("noise.system", _section(n, "system"), "none"),
                   ambient_noise=_parse_noise_model("noise.ambient", _section(n, "ambient"), "perlin"))

    out = _section(doc, "output")
    _check_keys("output", out, ("bit_depth", "scale", "v_scale"))
    output = _build("output", OutputConfig, **out)

    cal = _section(doc, "calibration")
    _check_keys("calibration", cal, ("params", "max_evals", "tolerance", "method", "points_per_dim"))
    if "params" in cal:
        parse_param_spec(cal["params"])

    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed", "must be an integer")
    return SimConfig(scene=scene, sensor=sensor, trace=trace, noise=noise, output=output,
                     seed=seed, objects=objects, calibration=cal, base_dir=base_dir)


def parse_param_spec(rows) -> ParamSpec:
    params = []
    for i, r in enumerate(rows or []):
        path = f"calibration.params[{i}]"
        if not isinstance(r, dict):
            raise ConfigError(path, "must be a mapping")
        _check_keys(path, r, ("name", "lower", "upper", "initial"))
        params.append(_build(path, Param, name=str(r["name"]), lower=float(r["lower"]),
                             upper=float(r["upper"]), initial=float(r["initial"])))
    return _build("calibration.params", ParamSpec, params=params)


def load_scene(path) -> SimConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(str(path), "config file not found")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(where, f"YAML syntax error: {exc}") from None
    return parse_config(doc or {}, base_dir=path.parent)


def to_dict(cfg: SimConfig) -> dict:
    """Serialise a SimConfig back into the config-file schema."""
    s = cfg.sensor
    return {
        "seed": cfg.seed,
        "materials": [{"name": m.name, "velocity": m.velocity, "A": m.A, "B": m.B, "C": m.C}
                      for m in cfg.materials.materials[1:]],
        "objects": [
            {k: v for k, v in {
                "mesh": o.mesh, "material": o.material,
                "materials": dict(o.materials) if o.materials else None,
                "transform": {"translation": list(o.translation), "rotation": list(o.rotation),
                              "scale": o.scale},
            }.items() if v is not None}
            for o in cfg.objects
        ],
        "sensor": {
            "n_azimuth": s.n_azimuth, "range_resolution": s.range_resolution,
            "n_range_bins": s.n_range_bins,
            "beam": {"kind": s.beam.kind.value, "width_deg": math.degrees(s.beam.width_b),
                     "inside_prob": s.beam.inside_prob_P, "n_samples": s.beam.n_samples},
            "mount": {"translation": [float(x) for x in s.mount.position],
                      "rotation": [float(x) for x in s.mount.orientation]},
        },
        "trace": {
            "max_bounces": cfg.trace.max_bounces, "min_energy": cfg.trace.min_energy,
            "total_emitted_energy": cfg.trace.total_emitted_energy,
            "return_leg_attenuation": cfg.trace.return_leg_attenuation,
            "lidar_like": cfg.trace.lidar_like, "f_rx": cfg.trace.f_rx,
        },
        "noise": {
            "range_blur_sigma": cfg.noise.range_blur_sigma,
            "system": _noise_dict(cfg.noise.system_noise),
            "ambient": _noise_dict(cfg.noise.ambient_noise),
        },
        "output": {"bit_depth": cfg.output.bit_depth, "scale": cfg.output.scale,
                   "v_scale": cfg.output.v_scale},
        "calibration": copy.deepcopy(cfg.calibration),
    }


def _noise_dict(m: NoiseModel) -> dict:
    return {"kind": m.kind, "amplitude": m.amplitude, "freq_az": m.freq_az, "freq_range": m.freq_range}


def dump_config(cfg: SimConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(to_dict(cfg), sort_keys=False), encoding="utf-8")


# ---------------------------------------------------------------------------
# Parameter paths
# ---------------------------------------------------------------------------

_TRACE_PARAMS = ("f_rx", "min_energy", "total_emitted_energy")


def apply_params(cfg: SimConfig, params: Dict[str, float]) -> SimConfig:
    """Return a copy of ``cfg`` with dotted-name parameters substituted.

    Supported names: ``material.<name>.(velocity|A|B|C)``,
    ``trace.(f_rx|min_energy|total_emitted_energy)``,
    ``noise.range_blur_sigma``, ``noise.(system|ambient).(amplitude|freq_az|freq_range)``,
    ``sensor.beam.(width_deg|inside_prob)``.
    """
    material_fields: Dict[str, Dict[str, float]] = {}
    names = {m.name for m in cfg.materials.materials[1:]}
    trace, noise, sensor = cfg.trace, cfg.noise, cfg.sensor
    for name, value in params.items():
        parts = name.split(".")
        value = float(value)
        try:
            if parts[0] == "material" and len(parts) == 3:
                if parts[1] not in names:
                    raise ConfigError(name, "unknown material")
                if parts[2] not in ("velocity", "A", "B", "C"):
                    raise ConfigError(name, "unknown material field")
                material_fields.setdefault(parts[1], {})[parts[2]] = value
            elif parts[0] == "trace" and len(parts) == 2 and parts[1] in _TRACE_PARAMS:
                trace = replace(trace, **{parts[1]: value})
            elif parts == ["noise", "range_blur_sigma"]:
                noise = replace(noise, range_blur_sigma=value)
            elif (parts[0] == "noise" and len(parts) == 3 and parts[1] in ("system", "ambient")
                  and parts[2] in ("amplitude", "freq_az", "freq_range")):
                key = "system_noise" if parts[1] == "system" else "ambient_noise"
                noise = replace(noise, **{key: replace(getattr(noise, key), **{parts[2]: value})})
            elif parts == ["sensor", "beam", "width_deg"]:
                sensor = replace(sensor, beam=replace(sensor.beam, width_b=math.radians(value)))
            elif parts == ["sensor", "beam", "inside_prob"]:
                sensor = replace(sensor, beam=replace(sensor.beam, inside_prob_P=value))
            else:
                raise ConfigError(name, "unsupported parameter name")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(name, str(exc)) from None
    out = replace(cfg, trace=trace, noise=noise, sensor=sensor)
    if material_fields:
        new = []
        for m in cfg.materials.materials:
            if m.name in material_fields:
                try:
                    m = replace(m, **material_fields[m.name])
                except ValueError as exc:
                    raise ConfigError(f"material.{m.name}", str(exc)) from None
            new.append(m)
        out = out.with_materials(MaterialTable(new))
    return out


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

class TrajectoryError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Trajectory:
    timestamps: List[float]
    poses: List[Pose]

    def __len__(self):
        return len(self.poses)

    def __iter__(self):
        return iter(zip(self.timestamps, self.poses))


def parse_trajectory(text: str) -> Trajectory:
    stamps: List[float] = []
    poses: List[Pose] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 8:
            raise TrajectoryError(lineno, f"expected 8 fields 't tx ty tz qx qy qz qw', got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise TrajectoryError(lineno, "non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise TrajectoryError(lineno, "non-finite field")
        t = vals[0]
        q = np.array(vals[4:8])
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-3:
            raise TrajectoryError(lineno, f"quaternion norm {norm:.6g} is not within 1e-3 of 1")
        if stamps and not t > stamps[-1]:
            raise TrajectoryError(lineno, "timestamps must be strictly increasing")
        stamps.append(t)
        poses.append(Pose(np.array(vals[1:4]), q / norm))
    return Trajectory(stamps, poses)


def load_trajectory(path) -> Trajectory:
    return parse_trajectory(Path(path).read_text(encoding="utf-8"))


def format_trajectory(traj: Trajectory) -> str:
    lines = []
    for t, p in traj:
        vals = [t, *p.position, *p.orientation]
        lines.append(" ".join(f"{v:.17g}" for v in vals))
    return "\n".join(lines) + "\n"
