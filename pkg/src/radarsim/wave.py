"""Materials and the wave-physics kernel.

Velocities are in m/ns. The effective refractive index of a medium is
``c / v``, so Snell's law reads ``sin(theta0) / sin(theta2) = v1 / v2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numba as nb
import numpy as np

C_LIGHT = 0.299792458  # m/ns


class MaterialError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Material:
    name: str
    velocity: float
    A: float = 0.0
    B: float = 0.0
    C: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.velocity <= C_LIGHT:
            raise MaterialError(f"{self.name}: velocity {self.velocity!r} outside (0, {C_LIGHT}]")
        if not 0.0 <= self.A <= 1.0:
            raise MaterialError(f"{self.name}: A={self.A!r} outside [0, 1]")
        if not 0.0 <= self.B <= 1.0:
            raise MaterialError(f"{self.name}: B={self.B!r} outside [0, 1]")
        if not self.A + self.B < 1.0:
            raise MaterialError(f"{self.name}: A+B={self.A + self.B!r} violates A+B < 1")
        if not math.isfinite(self.C):
            raise MaterialError(f"{self.name}: C must be finite")

    @property
    def S(self) -> float:
        return 1.0 - self.A - self.B


AIR = Material("air", C_LIGHT, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class MaterialTable:
    materials: List[Material] = field(default_factory=lambda: [AIR])

    def __post_init__(self):
        mats = list(self.materials)
        if not mats or mats[0].velocity != C_LIGHT:
            raise MaterialError("material 0 must be air")
        names = [m.name for m in mats]
        if len(set(names)) != len(names):
            raise MaterialError("duplicate material names")
        object.__setattr__(self, "materials", mats)

    @classmethod
    def with_air(cls, materials) -> "MaterialTable":
        return cls([AIR] + list(materials))

    def __len__(self):
        return len(self.materials)

    def __getitem__(self, i) -> Material:
        return self.materials[i]

    def index(self, name: str) -> int:
        for i, m in enumerate(self.materials):
            if m.name == name:
                return i
        raise MaterialError(f"unknown material {name!r}")

    def arrays(self):
        """(velocity, A, B, C) arrays for the tracing kernel."""
        v = np.array([m.velocity for m in self.materials], dtype=np.float64)
        a = np.array([m.A for m in self.materials], dtype=np.float64)
        b = np.array([m.B for m in self.materials], dtype=np.float64)
        c = np.array([m.C for m in self.materials], dtype=np.float64)
        return v, a, b, c


@dataclass(frozen=True)
class EnergySplit:
    reflected: float
    refracted: float


# ---------------------------------------------------------------------------
# Scalar kernels shared with the tracer
# ---------------------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def fresnel_reflectance(cos0, v1, v2):
    """Unpolarised power reflectance for incidence cosine ``cos0``.

    Returns 1.0 under total internal reflection.
    """
    cos0 = min(max(cos0, 0.0), 1.0)
    sin0 = math.sqrt(max(0.0, 1.0 - cos0 * cos0))
    sin2 = sin0 * v2 / v1
    if sin2 >= 1.0:
        return 1.0
    cos2 = math.sqrt(1.0 - sin2 * sin2)
    # n1 cos0 - n2 cos2 with n = c/v; common factor c cancels
    a = cos0 / v1
    b = cos2 / v2
    rs = (a - b) / (a + b)
    a = cos2 / v1
    b = cos0 / v2
    rp = (a - b) / (a + b)
    return 0.5 * (rs * rs + rp * rp)


@nb.njit(cache=True, nogil=True)
def lobe_factor(omega, A, B, C):
    """``A + B cos w + (1-A-B) cos(w)^C`` with w clamped to [0, pi/2]."""
    w = min(abs(omega), 0.5 * math.pi)
    c = max(math.cos(w), 0.0)
    if w == 0.5 * math.pi:
        c = 0.0
    if c == 0.0:
        spec = 0.0 if C > 0.0 else (1.0 if C == 0.0 else math.inf)
    else:
        spec = c ** C
    f = A + B * c + (1.0 - A - B) * spec
    return max(f, 0.0)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def reflect_dir(v0, n) -> np.ndarray:
    v0 = np.asarray(v0, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return v0 - 2.0 * np.dot(v0, n) * n


def snell_refract(v0, n, v1: float, v2: float) -> Optional[np.ndarray]:
    """Transmitted direction, or None under total internal reflection.

    ``n`` must face the incoming ray (dot(v0, n) < 0).
    """
    v0 = np.asarray(v0, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    eta = v2 / v1
    cos0 = -float(np.dot(v0, n))
    sin2_sq = eta * eta * max(0.0, 1.0 - cos0 * cos0)
    if sin2_sq > 1.0:
        return None
    cos2 = math.sqrt(1.0 - sin2_sq)
    t = eta * v0 + (eta * cos0 - cos2) * n
    return t / np.linalg.norm(t)


def fresnel_split(theta0: float, v1: float, v2: float, E0: float) -> EnergySplit:
    R = fresnel_reflectance(math.cos(theta0), v1, v2)
    E1 = R * E0
    return EnergySplit(E1, E0 - E1)


def reflection_energy(E1_total: float, omega: float, m: Material) -> float:
    """Energy of the reflection lobe seen at angular distance ``omega`` from its peak."""
    return E1_total * lobe_factor(omega, m.A, m.B, m.C)


def _angle(a, b) -> float:
    # atan2 form stays accurate near 0 and pi
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(math.atan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b)))


def return_angle_backpath(v0, v1_mean) -> float:
    """Angle between the mean reflection and the way back along the incoming ray."""
    return _angle(v1_mean, -np.asarray(v0, dtype=np.float64))


def return_angle_airpath(v1_mean, hit_point, sensor_origin) -> float:
    to_sensor = np.asarray(sensor_origin, dtype=np.float64) - np.asarray(hit_point, dtype=np.float64)
    dist = np.linalg.norm(to_sensor)
    if dist == 0.0:
        raise DomainError("hit point coincides with the sensor origin")
    return _angle(v1_mean, to_sensor / dist)


def free_space_return_power(Ps, G, lam, sigma, R):
    """Radar range equation: received power from a target of cross-section ``sigma``."""
    return Ps * G ** 2 * lam ** 2 * sigma / ((4.0 * math.pi) ** 3 * R ** 4)
