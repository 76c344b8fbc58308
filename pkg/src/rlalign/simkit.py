"""Intensity similarity measures.

All statistics are global (the whole image is one window) and use population
moments. ``dissimilarity`` is the unsupervised training signal
``1 - (rho + ssim) / 2``; ``nmi`` is reserved for evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .imgcore import as_image


@dataclass(frozen=True)
class SimilarityConfig:
    ssim_c1: float = 0.01 ** 2
    ssim_c2: float = 0.03 ** 2
    nmi_bins: int = 32

    def __post_init__(self):
        if not (self.ssim_c1 > 0 and self.ssim_c2 > 0):
            raise ConfigError("SSIM stabilizers must be positive")
        if self.nmi_bins < 2:
            raise ConfigError("nmi_bins must be >= 2")


DEFAULT_SIMILARITY = SimilarityConfig()


def _pair(x, y):
    x = as_image(x)
    y = as_image(y)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def _moments(x: np.ndarray, y: np.ndarray):
    mx = x.mean()
    my = y.mean()
    dx = x - mx
    dy = y - my
    return mx, my, np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy)


def correlation(x, y) -> float:
    """Global Pearson correlation; 0 when either image has zero variance."""
    x, y = _pair(x, y)
    if x.size < 2:
        raise DimensionError("correlation needs at least 2 pixels")
    _, _, vx, vy, cxy = _moments(x, y)
    if vx <= 0 or vy <= 0:
        return 0.0
    rho = cxy / np.sqrt(vx * vy)
    return float(np.clip(rho, -1.0, 1.0))


def ssim(x, y, cfg: SimilarityConfig = DEFAULT_SIMILARITY) -> float:
    x, y = _pair(x, y)
    mx, my, vx, vy, cxy = _moments(x, y)
    c1, c2 = cfg.ssim_c1, cfg.ssim_c2
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(num / den)


def dissimilarity(x, y, cfg: SimilarityConfig = DEFAULT_SIMILARITY) -> float:
    return 1.0 - (correlation(x, y) + ssim(x, y, cfg)) / 2.0


def _bin_index(img: np.ndarray, bins: int) -> np.ndarray:
    idx = np.floor(np.clip(img, 0.0, 1.0) * bins).astype(np.intp)
    return np.minimum(idx, bins - 1)


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def nmi(x, y, bins: int = 32) -> float:
    """Normalized mutual information ``2 I(X;Y) / (H(X) + H(Y))``.

    Intensities are binned into ``bins`` equal-width bins over [0, 1]. When
    both marginal entropies vanish (two constant images) the result is 1.
    """
    x, y = _pair(x, y)
    if bins < 2:
        raise ConfigError("bins must be >= 2")
    ix = _bin_index(x, bins).ravel()
    iy = _bin_index(y, bins).ravel()
    joint = np.bincount(ix * bins + iy, minlength=bins * bins).astype(np.float64)
    joint /= joint.sum()
    joint = joint.reshape(bins, bins)
    hx = _entropy(joint.sum(axis=1))
    hy = _entropy(joint.sum(axis=0))
    hxy = _entropy(joint.ravel())
    if hx + hy == 0:
        return 1.0
    return 2.0 * (hx + hy - hxy) / (hx + hy)
