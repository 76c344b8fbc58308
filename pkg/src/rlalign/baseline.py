"""Classical intensity-based rigid registration by compass (pattern) search.

Each start polls ``±step`` along tx, ty and theta, moves to the best strictly
improving neighbour, and halves (``shrink``) the step when no neighbour
improves. A start ends when every step component drops below ``tol`` or its
evaluation budget is spent; the best result over all starts wins, ties going
to the earliest start.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .imgcore import RigidTransform2D, as_image, warp
from .simkit import DEFAULT_SIMILARITY, SimilarityConfig, correlation, dissimilarity, nmi

METRICS = ("nmi", "correlation", "dissimilarity")
START_SPAN = 5.0


@dataclass(frozen=True)
class BaselineConfig:
    metric: str = "nmi"
    starts: int = 9
    max_evals: int = 500  # per start
    initial_step: tuple = (2.0, 2.0, 2.0)
    shrink: float = 0.5
    tol: float = 0.05
    similarity: SimilarityConfig = DEFAULT_SIMILARITY

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}; valid: {', '.join(METRICS)}")
        if not 1 <= self.starts <= 27:
            raise ConfigError("starts must be in 1..27")
        if not 0 < self.shrink < 1:
            raise ConfigError("shrink must lie in (0, 1)")
        if self.max_evals < 1 or not self.tol > 0:
            raise ConfigError("max_evals must be >= 1 and tol > 0")
        if len(self.initial_step) != 3 or any(s <= 0 for s in self.initial_step):
            raise ConfigError("initial_step needs three positive entries")
        object.__setattr__(self, "initial_step", tuple(float(s) for s in self.initial_step))


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform2D
    value: float
    evals: int
    path_values: tuple = ()  # metric after each accepted move of the winning start, start included


def start_points(count: int) -> list[np.ndarray]:
    """Identity first, then the 3x3 translation grid, then rotated copies."""
    offsets = (0.0, -START_SPAN, START_SPAN)
    points = []
    for theta, ty, tx in itertools.product(offsets, offsets, offsets):
        points.append(np.array([tx, ty, theta]))
    return points[:count]


def _objective(fixed, moving, cfg: BaselineConfig):
    """Score to maximise; returns ``(score_fn, sign)`` with ``metric = sign * score``."""
    bins = cfg.similarity.nmi_bins

    def score(params):
        warped = warp(moving, RigidTransform2D.from_array(params))
        if cfg.metric == "nmi":
            return nmi(fixed, warped, bins)
        if cfg.metric == "correlation":
            return correlation(fixed, warped)
        return -dissimilarity(fixed, warped, cfg.similarity)

    return score, (-1.0 if cfg.metric == "dissimilarity" else 1.0)


def _search(score, start: np.ndarray, cfg: BaselineConfig):
    x = start.copy()
    fx = score(x)
    evals = 1
    path = [fx]
    step = np.array(cfg.initial_step)
    while evals < cfg.max_evals and np.any(step >= cfg.tol):
        best_x, best_f = None, fx
        for axis in range(3):
            for sign in (1.0, -1.0):
                if evals >= cfg.max_evals:
                    break
                cand = x.copy()
                cand[axis] += sign * step[axis]
                f = score(cand)
                evals += 1
                if f > best_f:
                    best_x, best_f = cand, f
        if best_x is None:
            step = step * cfg.shrink
        else:
            x, fx = best_x, best_f
            path.append(fx)
    return x, fx, evals, path


def register(fixed, moving, cfg: BaselineConfig = BaselineConfig()) -> RegistrationResult:
    """Find the transform that best aligns ``warp(moving, T)`` with ``fixed``."""
    fixed = as_image(fixed)
    moving = as_image(moving)
    if fixed.shape != moving.shape:
        raise DimensionError(f"fixed {fixed.shape} and moving {moving.shape} differ")
    score, sign = _objective(fixed, moving, cfg)
    best = None
    total = 0
    for start in start_points(cfg.starts):
        x, fx, evals, path = _search(score, start, cfg)
        total += evals
        if best is None or fx > best[1]:
            best = (x, fx, path)
    x, fx, path = best
    return RegistrationResult(
        RigidTransform2D.from_array(x),
        sign * fx,
        total,
        tuple(sign * v for v in path),
    )
