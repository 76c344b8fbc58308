"""The registration MDP.

The agent holds a running correction ``T`` applied to the moving slice. Each
of the six actions nudges one parameter by one step::

    0: +tx   1: -tx   2: +ty   3: -ty   4: +theta   5: -theta

The state is the stack of the last ``history_n`` difference images
``fixed - warp(moving, T)``. The unsupervised reward is the signed drop in
dissimilarity ``D(T_prev) - D(T_new)``, plus ``bonus`` when the new D falls to
``epsilon_dist`` or below, which also ends the episode.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, DimensionError, InputError, StateError
from .imgcore import RigidTransform2D, as_image, warp
from .simkit import DEFAULT_SIMILARITY, SimilarityConfig, correlation, dissimilarity, nmi

N_ACTIONS = 6
ACTION_NAMES = ("+tx", "-tx", "+ty", "-ty", "+theta", "-theta")
REWARD_FORMS = ("signed", "abs")
REWARD_MODES = ("unsupervised", "supervised")
SUPERVISED_TERMINAL_DISTANCE = 1.0


@dataclass(frozen=True)
class EnvConfig:
    epsilon_dist: float = 0.05
    bonus: float = 10.0
    max_steps: int = 200
    history_n: int = 4
    action_step: tuple = (1.0, 1.0, 1.0)
    param_bound: float = 10.0
    reward_form: str = "signed"
    reward_mode: str = "unsupervised"
    similarity: SimilarityConfig = DEFAULT_SIMILARITY

    def __post_init__(self):
        if not self.epsilon_dist > 0:
            raise ConfigError("epsilon_dist must be > 0")
        if not self.bonus > 0:
            raise ConfigError("bonus must be > 0")
        if self.history_n < 1 or self.max_steps < 1:
            raise ConfigError("history_n and max_steps must be >= 1")
        if len(self.action_step) != 3 or any(s <= 0 for s in self.action_step):
            raise ConfigError("action_step needs three positive step sizes")
        if not self.param_bound > 0:
            raise ConfigError("param_bound must be > 0")
        if self.reward_form not in REWARD_FORMS:
            raise ConfigError(f"reward_form must be one of {REWARD_FORMS}")
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"reward_mode must be one of {REWARD_MODES}")
        object.__setattr__(self, "action_step", tuple(float(s) for s in self.action_step))


@dataclass(frozen=True)
class EnvState:
    fixed: np.ndarray = field(repr=False)
    moving: np.ndarray = field(repr=False)
    frames: tuple = field(repr=False)  # float32 difference images, oldest first
    current_t: RigidTransform2D
    step_index: int
    cumulative_reward: float
    distance: float
    terminal: bool
    truth: RigidTransform2D | None = None  # correcting transform, supervised mode only

    @property
    def stack(self) -> np.ndarray:
        """``[h, w, history_n]`` with the most recent difference last."""
        return np.stack(self.frames, axis=-1)


def _difference(fixed, warped) -> np.ndarray:
    return (fixed - warped).astype(np.float32)


def supervised_reward(truth, prev_t: RigidTransform2D, new_t: RigidTransform2D, cfg: EnvConfig):
    """Reward from parameter distance to the correcting transform ``truth``.

    Returns ``(reward, terminal)``; terminal once within unit distance, with
    the bonus added.
    """
    if truth is None:
        raise ConfigError("supervised reward needs a ground-truth transform")
    target = truth.as_array()
    before = float(np.linalg.norm(prev_t.as_array() - target))
    after = float(np.linalg.norm(new_t.as_array() - target))
    reward = before - after
    terminal = after <= SUPERVISED_TERMINAL_DISTANCE
    if terminal:
        reward += cfg.bonus
    return reward, terminal


def reset(fixed, moving, cfg: EnvConfig, truth: RigidTransform2D | None = None) -> EnvState:
    """Start an episode at the identity correction.

    ``truth`` is the transform that re-aligns ``moving`` (only needed in
    supervised mode). A pair that already satisfies the terminal test starts
    terminal, with the bonus credited at step 0.
    """
    fixed = as_image(fixed)
    moving = as_image(moving)
    if fixed.shape != moving.shape:
        raise DimensionError(f"fixed {fixed.shape} and moving {moving.shape} differ")
    if cfg.reward_mode == "supervised" and truth is None:
        raise ConfigError("supervised reward mode needs the ground-truth transform")
    d0 = dissimilarity(fixed, moving, cfg.similarity)
    first = _difference(fixed, moving)
    identity = RigidTransform2D.identity()
    if cfg.reward_mode == "supervised":
        done = float(np.linalg.norm(truth.as_array())) <= SUPERVISED_TERMINAL_DISTANCE
    else:
        done = d0 <= cfg.epsilon_dist
    return EnvState(
        fixed=fixed,
        moving=moving,
        frames=(first,) * cfg.history_n,
        current_t=identity,
        step_index=0,
        cumulative_reward=cfg.bonus if done else 0.0,
        distance=d0,
        terminal=done,
        truth=truth,
    )


def apply_action(t: RigidTransform2D, action: int, cfg: EnvConfig) -> RigidTransform2D:
    if not 0 <= action < N_ACTIONS:
        raise InputError(f"action must be in 0..{N_ACTIONS - 1}, got {action}")
    params = t.as_array()
    axis, sign = divmod(action, 2)
    params[axis] += cfg.action_step[axis] * (-1.0 if sign else 1.0)
    params = np.clip(params, -cfg.param_bound, cfg.param_bound)
    return RigidTransform2D.from_array(params)


def step(state: EnvState, action: int, cfg: EnvConfig):
    """Advance one action. Returns ``(next_state, reward, terminal)``."""
    if state.terminal:
        raise StateError("cannot step a terminal state; call reset")
    action = int(action)
    new_t = apply_action(state.current_t, action, cfg)
    warped = warp(state.moving, new_t)
    d_new = dissimilarity(state.fixed, warped, cfg.similarity)

    if cfg.reward_mode == "supervised":
        reward, terminal = supervised_reward(state.truth, state.current_t, new_t, cfg)
    else:
        reward = state.distance - d_new
        if cfg.reward_form == "abs":
            reward = abs(reward)
        terminal = d_new <= cfg.epsilon_dist
        if terminal:
            reward += cfg.bonus

    index = state.step_index + 1
    if index >= cfg.max_steps:
        terminal = True
    nxt = EnvState(
        fixed=state.fixed,
        moving=state.moving,
        frames=state.frames[1:] + (_difference(state.fixed, warped),),
        current_t=new_t,
        step_index=index,
        cumulative_reward=state.cumulative_reward + reward,
        distance=d_new,
        terminal=terminal,
        truth=state.truth,
    )
    return nxt, reward, terminal


@dataclass
class EpisodeReport:
    pair_id: str
    method: str
    nmi: float
    rho: float
    score: float | None
    steps: int
    wall_s: float
    final_t: RigidTransform2D
    truth_t: RigidTransform2D | None = None
    d_initial: float | None = None
    d_final: float | None = None
    success: bool | None = None

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "method": self.method,
            "nmi": self.nmi,
            "rho": self.rho,
            "score": self.score,
            "steps": self.steps,
            "wall_s": self.wall_s,
            "final_t": self.final_t.as_dict(),
            "truth_t": None if self.truth_t is None else self.truth_t.as_dict(),
            "d_initial": self.d_initial,
            "d_final": self.d_final,
            "success": self.success,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeReport":
        truth = d.get("truth_t")
        return cls(
            pair_id=str(d["pair_id"]),
            method=str(d["method"]),
            nmi=float(d["nmi"]),
            rho=float(d["rho"]),
            score=None if d.get("score") is None else float(d["score"]),
            steps=int(d["steps"]),
            wall_s=float(d["wall_s"]),
            final_t=RigidTransform2D(**d["final_t"]),
            truth_t=None if truth is None else RigidTransform2D(**truth),
            d_initial=d.get("d_initial"),
            d_final=d.get("d_final"),
            success=d.get("success"),
        )


def final_metrics(fixed, moving, t: RigidTransform2D, bins: int = 32):
    aligned = warp(moving, t)
    return nmi(fixed, aligned, bins), correlation(fixed, aligned)


def run_episode(
    fixed,
    moving,
    policy: Callable[[EnvState], int],
    cfg: EnvConfig,
    *,
    truth: RigidTransform2D | None = None,
    pair_id: str = "",
    method: str = "agent",
    timed: bool = True,
) -> EpisodeReport:
    """Roll out ``policy`` from reset to a terminal state.

    ``truth`` is the simulated corruption (recorded in the report); the
    supervised reward uses its inverse. ``timed=False`` reports zero wall time
    so that report files are reproducible byte for byte.
    """
    start = time.perf_counter()
    correction = None if truth is None else truth.invert()
    state = reset(fixed, moving, cfg, truth=correction if cfg.reward_mode == "supervised" else None)
    d_initial = state.distance
    while not state.terminal:
        state, _, _ = step(state, policy(state), cfg)
    wall = time.perf_counter() - start if timed else 0.0
    nmi_v, rho_v = final_metrics(state.fixed, state.moving, state.current_t, cfg.similarity.nmi_bins)
    return EpisodeReport(
        pair_id=pair_id,
        method=method,
        nmi=nmi_v,
        rho=rho_v,
        score=state.cumulative_reward,
        steps=state.step_index,
        wall_s=wall,
        final_t=state.current_t,
        truth_t=truth,
        d_initial=d_initial,
        d_final=state.distance,
        success=state.distance <= cfg.epsilon_dist,
    )


class RegistrationEnv:
    """Stateful wrapper used by the training loop.

    ``pair_source(rng)`` returns ``(fixed, moving, truth)`` where ``truth`` is
    the simulated corruption (or ``None``).
    """

    def __init__(self, pair_source, cfg: EnvConfig):
        self.pair_source = pair_source
        self.cfg = cfg
        self.state: EnvState | None = None
        self.n_actions = N_ACTIONS

    def reset(self, rng: np.random.Generator) -> EnvState:
        # Skip pairs that start terminal: they carry no learning signal.
        for _ in range(100):
            fixed, moving, truth = self.pair_source(rng)
            correction = None if truth is None else truth.invert()
            if self.cfg.reward_mode == "supervised" and correction is None:
                raise ConfigError("supervised reward mode needs ground-truth transforms")
            self.state = reset(fixed, moving, self.cfg, truth=correction)
            if not self.state.terminal:
                return self.state
        raise StateError("pair source keeps producing already-aligned pairs")

    def step(self, action: int):
        self.state, reward, terminal = step(self.state, action, self.cfg)
        return self.state, reward, terminal, {"distance": self.state.distance}

    @staticmethod
    def encode(states) -> np.ndarray:
        return np.stack([s.stack for s in states])

    def with_config(self, **changes) -> "RegistrationEnv":
        return RegistrationEnv(self.pair_source, replace(self.cfg, **changes))
