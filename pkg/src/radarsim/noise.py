"""Post-processing noise: range blur, system noise, ambient noise.

All random values are keyed by cell coordinates, never by draw order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as _rng
from .imaging import PolarImage, apply_range_blur

_STAGE_SYSTEM = 1
_STAGE_AMBIENT = 2
_GRADIENTS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0],
                       [1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]])


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def perlin2(x, y, seed: int = 0):
    """Classic 2-D gradient noise with quintic fade, values in [-1, 1].

    Lattice gradients are picked from the 8 classic directions by hashing
    (seed, ix, iy). Accepts scalars or broadcastable arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x, y = np.broadcast_arrays(x, y)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    ix = x0.astype(np.int64)
    iy = y0.astype(np.int64)

    def grad_dot(cx, cy, dx, dy):
        g = _GRADIENTS[(_rng.hash_u64(seed, cx, cy, 0x9E) & np.uint64(7)).astype(np.int64)]
        return g[..., 0] * dx + g[..., 1] * dy

    n00 = grad_dot(ix, iy, fx, fy)
    n10 = grad_dot(ix + 1, iy, fx - 1.0, fy)
    n01 = grad_dot(ix, iy + 1, fx, fy - 1.0)
    n11 = grad_dot(ix + 1, iy + 1, fx - 1.0, fy - 1.0)
    u = _fade(fx)
    v = _fade(fy)
    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    out = nx0 + v * (nx1 - nx0)
    out = np.clip(out, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "none"          # none | uniform | perlin
    amplitude: float = 0.0
    freq_az: float = 0.05       # lattice cells per azimuth step
    freq_range: float = 0.02    # lattice cells per range bin

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "perlin"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not self.amplitude >= 0.0:
            raise ValueError("noise amplitude must be >= 0")

    @property
    def inactive(self) -> bool:
        return self.kind == "none" or self.amplitude == 0.0


@dataclass(frozen=True)
class NoiseConfig:
    range_blur_sigma: float = 2.0
    system_noise: NoiseModel = field(default_factory=NoiseModel)
    ambient_noise: NoiseModel = field(default_factory=lambda: NoiseModel("perlin", 0.0))
    noise_seed: int = 0

    def __post_init__(self):
        if not self.range_blur_sigma >= 0.0:
            raise ValueError("range_blur_sigma must be >= 0")


def _noise_field(model: NoiseModel, shape, seed: int, stage: int) -> np.ndarray:
    rows, cols = np.indices(shape)
    if model.kind == "uniform":
        return model.amplitude * _rng.uniform(seed, stage, rows, cols)
    # perlin: x runs along azimuth, y along range
    p = perlin2(cols * model.freq_az, rows * model.freq_range, _rng.hash_u64(seed, stage).view(np.int64))
    return model.amplitude * 0.5 * (np.asarray(p) + 1.0)


def add_noise(img: PolarImage, cfg: NoiseConfig, seed: Optional[int] = None) -> PolarImage:
    """Range blur, then system noise, then ambient noise; clamps at 0."""
    seed = cfg.noise_seed if seed is None else seed
    out = apply_range_blur(img, cfg.range_blur_sigma)
    data = out.data
    for model, stage in ((cfg.system_noise, _STAGE_SYSTEM), (cfg.ambient_noise, _STAGE_AMBIENT)):
        if model.inactive:
            continue
        data = data + _noise_field(model, data.shape, seed, stage)
    return out.with_data(np.maximum(data, 0.0))
