"""Flat run configuration shared by every CLI subcommand.

A config file is one flat JSON object. Values are layered
``defaults < preset < config file < command-line flags``; unknown keys are
rejected before any work starts, and the merged result is echoed as
``effective_config.json`` next to each command's outputs.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .agent import AgentConfig, ExplorationSchedule
from .baseline import BaselineConfig
from .errors import ConfigError, IOFailure
from .phantom import MAX_MOTION, PhantomConfig
from .rlenv import EnvConfig
from .simkit import SimilarityConfig

SEED_ENV = "RLALIGN_SEED"
EFFECTIVE_CONFIG = "effective_config.json"

_PHANTOM = ("height", "width", "layer_count", "layer_amplitude", "layer_contrasts", "speckle_looks")
_ENV = ("epsilon_dist", "bonus", "max_steps", "history_n", "action_step", "param_bound", "reward_form")
_AGENT = ("variant", "reward_mode", "gamma", "batch_size", "lr", "target_sync_every", "steps_per_epoch",
          "epochs", "replay_capacity", "warmup", "train_every", "checkpoint_every", "aggregator")
_SCHEDULE = {"eps_start": "start", "eps_mid": "mid", "eps_mid_epoch": "mid_epoch",
             "eps_end": "end", "eps_end_epoch": "end_epoch"}
_BASELINE = {"baseline_metric": "metric", "baseline_starts": "starts", "baseline_max_evals": "max_evals",
             "baseline_initial_step": "initial_step", "baseline_shrink": "shrink", "baseline_tol": "tol"}
_SIMILARITY = ("ssim_c1", "ssim_c2", "nmi_bins")
_GENERAL = {"seed": 0, "workers": None, "motion_range": 3.0, "window": 84, "rotate": True}


def _defaults() -> dict:
    flat = {}
    p, e, a, s = PhantomConfig(), EnvConfig(), AgentConfig(), ExplorationSchedule()
    b, sim = BaselineConfig(), SimilarityConfig()
    flat.update({k: getattr(p, k) for k in _PHANTOM})
    flat.update({k: getattr(e, k) for k in _ENV})
    flat.update({k: getattr(a, k) for k in _AGENT})
    flat.update({k: getattr(s, f) for k, f in _SCHEDULE.items()})
    flat.update({k: getattr(b, f) for k, f in _BASELINE.items()})
    flat.update({k: getattr(sim, k) for k in _SIMILARITY})
    flat.update(_GENERAL)
    return flat


DEFAULTS = _defaults()

PRESETS = {
    # Sized for one laptop CPU: ~16k environment steps, an update every 4th step.
    "desk": {
        "epochs": 8, "steps_per_epoch": 2000, "train_every": 4, "batch_size": 64,
        "warmup": 1000, "target_sync_every": 500, "replay_capacity": 20_000,
        "max_steps": 50, "eps_mid_epoch": 4.0, "eps_end_epoch": 7.0, "eps_end": 0.05,
        "motion_range": 3.0, "rotate": False,
    },
    # Full-scale schedule: 125 epochs of 20k steps, batch 256.
    "full": {
        "epochs": 125, "steps_per_epoch": 20_000, "batch_size": 256, "lr": 1e-3,
        "replay_capacity": 1_000_000, "warmup": 5000, "target_sync_every": 2500,
        "max_steps": 200, "motion_range": 5.0, "rotate": True,
    },
}


@dataclass(frozen=True)
class RunConfig:
    phantom: PhantomConfig
    env: EnvConfig
    agent: AgentConfig
    schedule: ExplorationSchedule
    baseline: BaselineConfig
    similarity: SimilarityConfig
    seed: int
    workers: int
    motion_range: float
    window: int | None
    rotate: bool
    flat: dict

    @classmethod
    def from_flat(cls, values: dict) -> "RunConfig":
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        flat = dict(DEFAULTS)
        flat.update(values)
        if flat["workers"] is None:
            flat["workers"] = os.cpu_count() or 1
        try:
            flat["speckle_looks"] = float(flat["speckle_looks"])
            flat["layer_contrasts"] = tuple(float(c) for c in flat["layer_contrasts"])
            flat["action_step"] = tuple(float(c) for c in flat["action_step"])
            flat["baseline_initial_step"] = tuple(float(c) for c in flat["baseline_initial_step"])
            motion = float(flat["motion_range"])
            similarity = SimilarityConfig(**{k: flat[k] for k in _SIMILARITY})
            cfg = cls(
                phantom=PhantomConfig(**{k: flat[k] for k in _PHANTOM}),
                env=EnvConfig(similarity=similarity, reward_mode=flat["reward_mode"],
                              **{k: flat[k] for k in _ENV}),
                agent=AgentConfig(seed=int(flat["seed"]), **{k: flat[k] for k in _AGENT}),
                schedule=ExplorationSchedule(**{f: float(flat[k]) for k, f in _SCHEDULE.items()}),
                baseline=BaselineConfig(similarity=similarity, **{f: flat[k] for k, f in _BASELINE.items()}),
                similarity=similarity,
                seed=int(flat["seed"]),
                workers=int(flat["workers"]),
                motion_range=motion,
                window=None if flat["window"] is None else int(flat["window"]),
                rotate=bool(flat["rotate"]),
                flat=flat,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration value: {exc}") from exc
        if not 0 <= motion <= MAX_MOTION:
            raise ConfigError(f"motion range {motion} outside the simulated ±{MAX_MOTION} bound")
        if cfg.workers < 1:
            raise ConfigError("workers must be >= 1")
        if cfg.window is not None and (cfg.window > cfg.phantom.height or cfg.window > cfg.phantom.width):
            raise ConfigError(f"window {cfg.window} larger than phantom {cfg.phantom.height}x{cfg.phantom.width}")
        return cfg

    def to_json(self) -> str:
        out = {}
        for k, v in sorted(self.flat.items()):
            if isinstance(v, float) and math.isinf(v):
                v = "inf"
            out[k] = list(v) if isinstance(v, tuple) else v
        return json.dumps(out, indent=2, sort_keys=True) + "\n"

    def echo(self, directory) -> Path:
        path = Path(directory) / EFFECTIVE_CONFIG
        try:
            path.write_text(self.to_json())
        except OSError as exc:
            raise IOFailure(f"cannot write {path}: {exc}") from exc
        return path


def read_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IOFailure(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise ConfigError(f"config {path} must be one flat JSON object")
    if data.get("speckle_looks") == "inf":
        data["speckle_looks"] = math.inf
    return data


def build(preset: str | None = None, config_file=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; valid: {', '.join(PRESETS)}")
        values.update(PRESETS[preset])
    if SEED_ENV in os.environ:
        try:
            values["seed"] = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    if config_file is not None:
        values.update(read_config_file(config_file))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_flat(values)


def env_from_meta(meta: dict) -> EnvConfig | None:
    """Rebuild the environment config a checkpoint was trained with."""
    env = meta.get("env")
    if env is None:
        return None
    sim = SimilarityConfig(**{k: env[k] for k in _SIMILARITY if k in env})
    kwargs = {k: env[k] for k in (*_ENV, "reward_mode") if k in env}
    if "action_step" in kwargs:
        kwargs["action_step"] = tuple(kwargs["action_step"])
    return EnvConfig(similarity=sim, **kwargs)


def env_meta(cfg: RunConfig) -> dict:
    env = {f.name: getattr(cfg.env, f.name) for f in fields(EnvConfig) if f.name != "similarity"}
    env["action_step"] = list(env["action_step"])
    env.update({k: getattr(cfg.similarity, k) for k in _SIMILARITY})
    return env
