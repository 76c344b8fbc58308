"""Synthetic layered B-scans with speckle, and motion-corrupted slice pairs.

A phantom is a stack of horizontal bands with smooth, undulating boundaries.
Speckle is multiplicative gamma noise with unit mean; ``speckle_looks`` is the
gamma shape, so larger values mean weaker noise and ``inf`` disables it.
Adjacent-slice pairs share the band structure but get independent speckle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoundsError, ConfigError
from .imgcore import RigidTransform2D, as_image, crop, normalize, warp

MAX_MOTION = 5.0
BACKGROUND = 0.05


@dataclass(frozen=True)
class PhantomConfig:
    height: int = 128
    width: int = 128
    layer_count: int = 10
    layer_amplitude: float = 3.0
    layer_contrasts: tuple = (0.9, 0.25, 0.8, 0.15, 0.95, 0.3, 0.75, 0.2, 0.85, 0.35)
    speckle_looks: float = 64.0
    seed: int = 0

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ConfigError("phantom must be at least 8x8")
        if self.layer_count < 2:
            raise ConfigError("layer_count must be >= 2")
        if len(self.layer_contrasts) != self.layer_count:
            raise ConfigError(
                f"layer_contrasts has {len(self.layer_contrasts)} entries, "
                f"expected {self.layer_count}"
            )
        if any(not 0.0 <= c <= 1.0 for c in self.layer_contrasts):
            raise ConfigError("layer contrasts must lie in [0, 1]")
        if not self.speckle_looks > 0:
            raise ConfigError("speckle_looks must be positive")
        if self.layer_amplitude < 0:
            raise ConfigError("layer_amplitude must be non-negative")

    @property
    def noise_free(self) -> bool:
        return math.isinf(self.speckle_looks)


def _boundaries(cfg: PhantomConfig, rng: np.random.Generator) -> np.ndarray:
    """Boundary rows ``(layer_count + 1, width)``; boundary k tops layer k."""
    h, w = cfg.height, cfg.width
    top = h * rng.uniform(0.25, 0.32)
    bottom = h * rng.uniform(0.68, 0.75)
    weights = rng.uniform(0.6, 1.4, size=cfg.layer_count)
    cuts = top + (bottom - top) * np.concatenate([[0.0], np.cumsum(weights) / weights.sum()])

    xs = np.arange(w, dtype=np.float64)

    def undulation(scale):
        wave = np.zeros(w)
        for _ in range(3):
            period = rng.uniform(24.0, 96.0)
            phase = rng.uniform(0, 2 * math.pi)
            wave += rng.uniform(0.3, 1.0) * np.sin(2 * math.pi * xs / period + phase)
        return scale * wave / 3.0

    shared = undulation(cfg.layer_amplitude)
    rows = np.empty((cfg.layer_count + 1, w))
    for k, cut in enumerate(cuts):
        rows[k] = cut + shared + undulation(0.4 * cfg.layer_amplitude)
    # Keep boundaries ordered so every band has positive thickness.
    for k in range(1, len(rows)):
        rows[k] = np.maximum(rows[k], rows[k - 1] + 1.0)
    return rows


def render_structure(cfg: PhantomConfig) -> np.ndarray:
    """Noise-free band image in [0, 1], deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    rows = _boundaries(cfg, rng)
    y = np.arange(cfg.height, dtype=np.float64)[:, None]
    levels = [BACKGROUND, *cfg.layer_contrasts, BACKGROUND]
    img = np.full((cfg.height, cfg.width), levels[0])
    edge = 0.7
    for k in range(len(rows)):
        step = levels[k + 1] - levels[k]
        img += step / (1.0 + np.exp(-(y - rows[k][None, :]) / edge))
    return np.clip(img, 0.0, 1.0)


def apply_speckle(img, looks: float, rng: np.random.Generator) -> np.ndarray:
    img = as_image(img)
    if math.isinf(looks):
        return img.copy()
    noise = rng.gamma(shape=looks, scale=1.0 / looks, size=img.shape)
    return img * noise


def _finish(raw: np.ndarray) -> np.ndarray:
    return normalize(np.clip(raw, 0.0, 1.0))


def generate_bscan(cfg: PhantomConfig) -> np.ndarray:
    """A speckled phantom B-scan, bit-identical for a fixed config."""
    structure = render_structure(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    return _finish(apply_speckle(structure, cfg.speckle_looks, rng))


def sample_motion(rng: np.random.Generator, motion_range: float, rotate: bool = True) -> RigidTransform2D:
    if not 0 <= motion_range <= MAX_MOTION:
        raise ConfigError(f"motion range must be in [0, {MAX_MOTION}], got {motion_range}")
    tx, ty, theta = rng.uniform(-motion_range, motion_range, size=3)
    if not rotate:
        theta = 0.0
    return RigidTransform2D(float(tx), float(ty), float(theta))


@dataclass(frozen=True)
class PhantomPair:
    fixed: np.ndarray = field(repr=False)
    moving: np.ndarray = field(repr=False)
    truth: RigidTransform2D

    def __iter__(self):
        return iter((self.fixed, self.moving, self.truth))


def generate_pair(
    cfg: PhantomConfig,
    motion_range: float,
    rng_seed: int,
    *,
    window: int | None = None,
    rotate: bool = True,
) -> PhantomPair:
    """Fixed slice plus a moving slice corrupted by a random rigid motion.

    ``moving = warp(variant, truth)`` where ``variant`` re-draws the speckle on
    the same structure. With ``window`` set, a window is first sampled around
    the bright layers of the full B-scan and both slices are cropped to it
    after warping.
    """
    rng = np.random.default_rng(rng_seed)
    truth = sample_motion(rng, motion_range, rotate)
    structure = render_structure(cfg)
    fixed = _finish(apply_speckle(structure, cfg.speckle_looks, rng))
    variant = _finish(apply_speckle(structure, cfg.speckle_looks, rng))
    if window is None:
        return PhantomPair(fixed, warp(variant, truth), truth)
    # Crop after warping so the moving window carries no zero-fill border. The
    # full-frame motion is chosen so that ``truth`` holds about the window center.
    cx, cy = sample_window(structure, window, 4, 2, rng)
    moving = warp(variant, recenter(truth, _window_offset(structure.shape, cx, cy, window)))
    return PhantomPair(crop(fixed, cx, cy, window), crop(moving, cx, cy, window), truth)


def _window_offset(shape, cx: int, cy: int, size: int) -> tuple[float, float]:
    h, w = shape
    half = (size - 1) / 2.0
    return (cx - size // 2 + half - (w - 1) / 2.0, cy - size // 2 + half - (h - 1) / 2.0)


def recenter(t: RigidTransform2D, offset) -> RigidTransform2D:
    """Re-express ``t`` (about some center ``c``) as a motion about ``c + offset``.

    Both transforms move every point identically, so this is the translation
    shift ``(I - R) offset``.
    """
    if t.theta == 0.0:
        return t
    rad = math.radians(t.theta)
    c, s = math.cos(rad), math.sin(rad)
    dx, dy = offset
    return RigidTransform2D(t.tx + (1 - c) * dx + s * dy, t.ty - s * dx + (1 - c) * dy, t.theta)


def sample_window(img, size: int, spacing_y: int, spacing_x: int, rng: np.random.Generator) -> tuple[int, int]:
    """Pick a window center ``(cx, cy)`` around the bright rows of ``img``.

    Bright rows are those whose mean exceeds the image mean; ``[b0, b1]`` is
    their span. Windows either sit inside the span or, when the span is
    shorter than the window, contain it. Centers lie on the grid
    ``size//2 + k*spacing`` and the window always fits in the image.
    """
    img = as_image(img)
    h, w = img.shape
    if size > h or size > w or size < 1:
        raise BoundsError(f"window {size} does not fit image {h}x{w}")
    half = size // 2
    row_mean = img.mean(axis=1)
    bright = np.flatnonzero(row_mean > img.mean())
    if bright.size == 0:
        b0, b1 = 0, h - 1
    else:
        b0, b1 = int(bright[0]), int(bright[-1])
    a = b0 + half
    b = b1 - size + 1 + half
    cy = _grid_choice(min(a, b), max(a, b), half, h - size + half, spacing_y, rng)
    cx = _grid_choice(half, w - size + half, half, w - size + half, spacing_x, rng)
    return cx, cy


def _grid_choice(lo, hi, valid_lo, valid_hi, spacing, rng):
    grid = np.arange(valid_lo, valid_hi + 1, spacing)
    inside = grid[(grid >= lo) & (grid <= hi)]
    if inside.size == 0:
        # Nearest grid point to the requested span.
        mid = (lo + hi) / 2.0
        inside = grid[[int(np.argmin(np.abs(grid - mid)))]]
    return int(inside[rng.integers(inside.size)])


def with_seed(cfg: PhantomConfig, seed: int) -> PhantomConfig:
    return replace(cfg, seed=int(seed))


@dataclass(frozen=True)
class PairStream:
    """Endless source of fresh phantom pairs, one new structure per draw."""

    cfg: PhantomConfig = PhantomConfig()
    motion_range: float = 3.0
    window: int | None = 84
    rotate: bool = True

    def __call__(self, rng: np.random.Generator):
        structure_seed, pair_seed = (int(s) for s in rng.integers(0, 2**31 - 1, size=2))
        pair = generate_pair(with_seed(self.cfg, structure_seed), self.motion_range, pair_seed,
                             window=self.window, rotate=self.rotate)
        return pair.fixed, pair.moving, pair.truth
