"""Grayscale images and 2D rigid geometry.

Images are plain 2D ``float64`` numpy arrays (row-major, ``img[y, x]``) holding
intensities in [0, 1]. Every function here is pure and returns a new array.

A rigid transform ``T = (tx, ty, theta)`` maps a point ``p`` to
``R(theta) (p - c) + c + (tx, ty)`` where ``c = ((w-1)/2, (h-1)/2)`` is the
image center and ``theta`` is in degrees. ``warp(img, T)`` moves image content
along ``T``: a pure ``tx = 3`` shift pushes content three columns to the right.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, DataError, DimensionError


@dataclass(frozen=True)
class RigidTransform2D:
    tx: float = 0.0
    ty: float = 0.0
    theta: float = 0.0  # degrees

    @classmethod
    def identity(cls) -> "RigidTransform2D":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values) -> "RigidTransform2D":
        tx, ty, theta = (float(v) for v in values)
        return cls(tx, ty, theta)

    def as_array(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.theta], dtype=np.float64)

    def as_dict(self) -> dict:
        return {"tx": self.tx, "ty": self.ty, "theta": self.theta}

    def is_identity(self) -> bool:
        return self.tx == 0.0 and self.ty == 0.0 and self.theta == 0.0

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        """Return ``self ∘ other`` (``other`` is applied first)."""
        if other.is_identity():
            return self
        c, s = _cos_sin(self.theta)
        tx = c * other.tx - s * other.ty + self.tx
        ty = s * other.tx + c * other.ty + self.ty
        return RigidTransform2D(tx, ty, self.theta + other.theta)

    def invert(self) -> "RigidTransform2D":
        c, s = _cos_sin(-self.theta)
        tx = -(c * self.tx - s * self.ty)
        ty = -(s * self.tx + c * self.ty)
        return RigidTransform2D(tx, ty, -self.theta)


def _cos_sin(theta_deg: float) -> tuple[float, float]:
    if theta_deg == 0.0:
        return 1.0, 0.0
    rad = math.radians(theta_deg)
    return math.cos(rad), math.sin(rad)


def as_image(img) -> np.ndarray:
    """Validate and coerce to a non-empty 2D float64 array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"expected non-empty 2D image, got shape {arr.shape}")
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` at float coordinates; neighbours outside the image count as 0."""
    h, w = img.shape
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    # A one-pixel zero frame lets every out-of-range tap land on a zero cell.
    padded = np.zeros((h + 2, w + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = img
    flat = padded.ravel()
    cols0 = np.clip(x0, -1, w) + 1
    cols1 = np.clip(x0 + 1, -1, w) + 1
    rows0 = (np.clip(y0, -1, h) + 1) * (w + 2)
    rows1 = (np.clip(y0 + 1, -1, h) + 1) * (w + 2)

    top = flat[rows0 + cols0] * (1.0 - fx) + flat[rows0 + cols1] * fx
    bottom = flat[rows1 + cols0] * (1.0 - fx) + flat[rows1 + cols1] * fx
    return top * (1.0 - fy) + bottom * fy


@functools.lru_cache(maxsize=8)
def _centered_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    xs -= (w - 1) / 2.0
    ys -= (h - 1) / 2.0
    xs.flags.writeable = False
    ys.flags.writeable = False
    return xs, ys


def warp(img, t: RigidTransform2D) -> np.ndarray:
    """Resample ``img`` under ``t`` by inverse mapping with bilinear interpolation."""
    img = as_image(img)
    if t.is_identity():
        return img.copy()
    h, w = img.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    xs, ys = _centered_grid(h, w)
    # source = R(-theta) (p - c - t) + c
    c, s = _cos_sin(-t.theta)
    dx = xs - t.tx
    dy = ys - t.ty
    src_x = c * dx - s * dy + cx
    src_y = s * dx + c * dy + cy
    return bilinear_sample(img, src_x, src_y)


def diff(a, b) -> np.ndarray:
    a = as_image(a)
    b = as_image(b)
    _check_same_shape(a, b)
    return a - b


def crop(img, cx: int, cy: int, size: int) -> np.ndarray:
    """Copy the ``size``×``size`` window whose top-left is ``(cy - size//2, cx - size//2)``."""
    img = as_image(img)
    h, w = img.shape
    top = int(cy) - size // 2
    left = int(cx) - size // 2
    if size < 1 or top < 0 or left < 0 or top + size > h or left + size > w:
        raise BoundsError(
            f"window of size {size} at center ({cx}, {cy}) exceeds image {h}x{w}"
        )
    return img[top:top + size, left:left + size].copy()


def resize(img, h: int, w: int) -> np.ndarray:
    """Bilinear resize on a corner-aligned grid (output corners hit input corners)."""
    img = as_image(img)
    if h < 1 or w < 1:
        raise DimensionError(f"target size must be positive, got {h}x{w}")
    src_h, src_w = img.shape
    if (h, w) == (src_h, src_w):
        return img.copy()
    ys = _corner_grid(h, src_h)
    xs = _corner_grid(w, src_w)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    # Clamp the far neighbour so corner samples never read outside.
    x0 = np.minimum(np.floor(gx).astype(np.intp), src_w - 1)
    y0 = np.minimum(np.floor(gy).astype(np.intp), src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    fx = gx - x0
    fy = gy - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _corner_grid(n_out: int, n_in: int) -> np.ndarray:
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))


def normalize(raw) -> np.ndarray:
    """Affine min-max rescale to [0, 1]. A constant raster maps to all zeros."""
    arr = np.asarray(raw, dtype=np.float64)
    if arr.size == 0:
        raise DimensionError("cannot normalize an empty raster")
    if not np.all(np.isfinite(arr)):
        raise DataError("raster contains NaN or Inf")
    lo = arr.min()
    span = arr.max() - lo
    if span == 0:
        return np.zeros_like(arr)
    out = (arr - lo) / span
    # Guard the endpoints against rounding.
    return np.clip(out, 0.0, 1.0)
