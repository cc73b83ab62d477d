"""Ray-tracing simulator for rotating FMCW radar sensors."""

from .geometry import AccelIndex, Pose, RayHit, TriangleMesh, build_accel, intersect, occluded
from .imaging import PolarImage, bin_signals, quantize, read_pgm, write_pgm
from .noise import NoiseConfig, NoiseModel, add_noise, perlin2
from .sampling import AngularOffset, BeamKind, BeamModel, inverse_erf
from .tracer import ReturnSignal, Scene, SensorModel, TraceConfig, simulate_frame, trace_beam
from .wave import Material, MaterialTable

__version__ = "0.1.0"
