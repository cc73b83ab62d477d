"""Image similarity: structural similarity (box window) and mutual information."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricConfig:
    ssim_window: int = 11
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    dynamic_range: Optional[float] = None   # None: max of both images' value ranges
    mi_bins: int = 64

    def __post_init__(self):
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise MetricError("ssim_window must be odd and >= 3")
        if self.mi_bins < 2:
            raise MetricError("mi_bins must be >= 2")
        if not (self.ssim_k1 > 0 and self.ssim_k2 > 0):
            raise MetricError("ssim_k1 and ssim_k2 must be > 0")


DEFAULT = MetricConfig()


def _as_array(img) -> np.ndarray:
    data = getattr(img, "data", img)
    return np.asarray(data, dtype=np.float64)


def _check_pair(a, b):
    a = _as_array(a)
    b = _as_array(b)
    if a.shape != b.shape:
        raise MetricError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _window_sums(x: np.ndarray, w: int) -> np.ndarray:
    # sums over every fully contained w x w window via an integral image
    s = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    s[1:, 1:] = x.cumsum(0).cumsum(1)
    return s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]


def ssim(a, b, cfg: MetricConfig = DEFAULT) -> float:
    a, b = _check_pair(a, b)
    w = cfg.ssim_window
    if a.shape[0] < w or a.shape[1] < w:
        w = max(1, min(a.shape))
    L = cfg.dynamic_range
    if L is None:
        L = max(np.ptp(a), np.ptp(b))
        if L == 0.0:
            L = 1.0
    c1 = (cfg.ssim_k1 * L) ** 2
    c2 = (cfg.ssim_k2 * L) ** 2
    # centre both images on a shared offset to keep the moment sums well conditioned
    shift = 0.5 * (a.mean() + b.mean())
    a = a - shift
    b = b - shift
    n = float(w * w)
    mu_a = _window_sums(a, w) / n
    mu_b = _window_sums(b, w) / n
    var_a = _window_sums(a * a, w) / n - mu_a * mu_a
    var_b = _window_sums(b * b, w) / n - mu_b * mu_b
    cov = _window_sums(a * b, w) / n - mu_a * mu_b
    mu_a = mu_a + shift
    mu_b = mu_b + shift
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _bin_indices(x: np.ndarray, bins: int) -> np.ndarray:
    lo = x.min()
    hi = x.max()
    if hi <= lo:
        return np.zeros(x.shape, dtype=np.int64)
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def _entropy_of_counts(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def entropy(a, cfg: MetricConfig = DEFAULT) -> float:
    """Shannon entropy (nats) of the ``mi_bins`` histogram of ``a``."""
    x = _as_array(a).ravel()
    return _entropy_of_counts(np.bincount(_bin_indices(x, cfg.mi_bins), minlength=cfg.mi_bins))


def mutual_information(a, b, cfg: MetricConfig = DEFAULT) -> float:
    """Mutual information (nats) of the joint ``mi_bins`` x ``mi_bins`` histogram.

    Computed as H(a) + H(b) - H(a, b), which makes MI(a, a) = H(a) hold
    up to rounding and MI symmetric.
    """
    a, b = _check_pair(a, b)
    k = cfg.mi_bins
    ia = _bin_indices(a.ravel(), k)
    ib = _bin_indices(b.ravel(), k)
    joint = np.bincount(ia * k + ib, minlength=k * k)
    ha = _entropy_of_counts(np.bincount(ia, minlength=k))
    hb = _entropy_of_counts(np.bincount(ib, minlength=k))
    hab = _entropy_of_counts(joint)
    return max(ha + hb - hab, 0.0)
