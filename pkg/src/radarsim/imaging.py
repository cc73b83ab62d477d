"""Polar images: range binning, range blur, quantisation and PGM I/O.

Image data is stored as ``(n_range_bins, n_azimuth)``: one column per
azimuth, one row per range bin, which is also the PGM pixel layout.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np


class PGMError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class PolarImage:
    data: np.ndarray
    range_resolution: float = 1.0
    timestamp: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("polar image data must be 2-D (range bins x azimuths)")
        if not np.all(np.isfinite(self.data)) or np.any(self.data < 0):
            raise ValueError("polar image values must be finite and >= 0")

    @property
    def n_azimuth(self) -> int:
        return self.data.shape[1]

    @property
    def n_range_bins(self) -> int:
        return self.data.shape[0]

    def column(self, a: int) -> np.ndarray:
        return self.data[:, a]

    def with_data(self, data) -> "PolarImage":
        return replace(self, data=np.asarray(data, dtype=np.float64))


def bin_signals(signals: Iterable, sensor) -> np.ndarray:
    """Sum signal energies into the range bins of one column."""
    column = np.zeros(sensor.n_range_bins)
    for s in signals:
        b = int(math.floor(s.apparent_range / sensor.range_resolution))
        if 0 <= b < sensor.n_range_bins:
            column[b] += s.energy
    return column


def gaussian_kernel(sigma: float) -> np.ndarray:
    half = int(math.ceil(4.0 * sigma))
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def apply_range_blur(img: PolarImage, sigma: float) -> PolarImage:
    """Gaussian blur along range, per column.

    Mass that the truncated kernel would push past either end of the column
    is folded back into the column (reflective boundary), so each column's
    sum is preserved.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img.with_data(img.data.copy())
    k = gaussian_kernel(sigma)
    half = len(k) // 2
    data = img.data
    n = data.shape[0]
    padded = np.pad(data, ((half, half), (0, 0)))
    out = np.zeros_like(padded)
    for i, w in enumerate(k):
        out[i:i + n] += w * data
    body = out[half:half + n].copy()
    # fold overflow back with mirror indexing
    for j in range(half):
        src_top = half - 1 - j          # lands at virtual row -(j+1)
        src_bot = half + n + j          # lands at virtual row n+j
        body[min(j, n - 1)] += out[src_top]
        body[max(n - 1 - j, 0)] += out[src_bot]
    return img.with_data(body)


def quantize(img, bit_depth: int = 16, scale: str = "linear", v_max: Optional[float] = None,
             v_scale: Optional[float] = None) -> np.ndarray:
    """Map intensities to unsigned integers of ``bit_depth`` bits."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    data = img.data if isinstance(img, PolarImage) else np.asarray(img, dtype=np.float64)
    top = (1 << bit_depth) - 1
    vmax = float(data.max()) if v_max is None and data.size else (v_max or 0.0)
    if vmax <= 0.0:
        vmax = 1.0
    if scale == "linear":
        x = data / vmax
    elif scale == "log":
        vs = v_scale if v_scale is not None else vmax * 1e-3
        x = np.log1p(data / vs) / math.log1p(vmax / vs)
    else:
        raise ValueError(f"unknown scale {scale!r}")
    q = np.rint(np.clip(x, 0.0, 1.0) * top)
    return q.astype(np.uint16 if bit_depth == 16 else np.uint8)


def write_pgm(img, path, bit_depth: Optional[int] = None) -> None:
    """Write an integer image as binary PGM (P5), big-endian for 16 bit."""
    q = np.asarray(img)
    if bit_depth is None:
        bit_depth = 8 if q.dtype == np.uint8 else 16
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    if q.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    maxval = (1 << bit_depth) - 1
    if q.size and (q.min() < 0 or q.max() > maxval):
        raise ValueError("values out of range for bit depth")
    height, width = q.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    body = q.astype(">u2" if bit_depth == 16 else "u1").tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header + body)
    os.replace(tmp, path)


def _header_token(buf: bytes, pos: int):
    # skip whitespace and comments
    while pos < len(buf):
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PGMError("unexpected end of header", start)
    return buf[start:pos], start, pos


def parse_pgm(buf: bytes) -> np.ndarray:
    magic, off, pos = _header_token(buf, 0)
    if magic != b"P5":
        raise PGMError(f"bad magic {magic!r}, expected b'P5'", off)
    vals = []
    for name in ("width", "height", "maxval"):
        tok, off, pos = _header_token(buf, pos)
        if not tok.isdigit():
            raise PGMError(f"{name} is not a decimal integer: {tok!r}", off)
        vals.append((int(tok), off))
    (width, _), (height, _), (maxval, moff) = vals
    if not 0 < maxval < 65536:
        raise PGMError(f"maxval {maxval} outside 1..65535", moff)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PGMError("missing whitespace after maxval", pos)
    pos += 1
    bpp = 1 if maxval < 256 else 2
    need = width * height * bpp
    if len(buf) - pos < need:
        raise PGMError(f"truncated pixel data: need {need} bytes, have {len(buf) - pos}", len(buf))
    dtype = np.dtype("u1") if bpp == 1 else np.dtype(">u2")
    data = np.frombuffer(buf, dtype=dtype, count=width * height, offset=pos).reshape(height, width)
    return data.astype(np.uint8 if bpp == 1 else np.uint16)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())
