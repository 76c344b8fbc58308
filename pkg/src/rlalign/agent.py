"""Deep Q-learning driver: replay memory, exploration, targets and training."""
from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, IOFailure, NumericError, StateError
from .neural import (
    Architecture,
    QNetwork,
    QNetworkParams,
    adam_step,
    backward,
    forward,
    head_for_variant,
    make_optimizer,
    save_checkpoint,
)
from .rlenv import supervised_reward  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

VARIANTS = ("dqn", "double", "dueling", "double_dueling")


@dataclass(frozen=True)
class Transition:
    state: object
    action: int
    reward: float
    next_state: object
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform minibatch sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("replay capacity must be >= 1")
        self.capacity = int(capacity)
        self._items: list = []
        self._cursor = 0

    def __len__(self):
        return len(self._items)

    def push(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._cursor] = item
        self._cursor = (self._cursor + 1) % self.capacity

    def contents(self) -> list:
        """Records from oldest to newest."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._cursor:] + self._items[:self._cursor]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list:
        if len(self._items) < batch_size:
            raise StateError(f"buffer holds {len(self._items)} records, cannot sample {batch_size}")
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]


@dataclass(frozen=True)
class ExplorationSchedule:
    """Piecewise-linear epsilon over (possibly fractional) epochs, flat after ``end_epoch``."""

    start: float = 1.0
    mid: float = 0.1
    mid_epoch: float = 20.0
    end: float = 0.01
    end_epoch: float = 100.0

    def __post_init__(self):
        if not (0 < self.mid_epoch < self.end_epoch):
            raise ConfigError("need 0 < mid_epoch < end_epoch")
        if not (1 >= self.start >= self.mid >= self.end >= 0):
            raise ConfigError("schedule values must be non-increasing within [0, 1]")

    def value(self, epoch: float) -> float:
        return float(np.interp(
            epoch,
            [0.0, self.mid_epoch, self.end_epoch],
            [self.start, self.mid, self.end],
        ))

    @classmethod
    def constant(cls, eps: float) -> "ExplorationSchedule":
        return cls(eps, eps, 1.0, eps, 2.0)


@dataclass(frozen=True)
class AgentConfig:
    variant: str = "dueling"
    reward_mode: str = "unsupervised"
    gamma: float = 0.9
    batch_size: int = 64
    lr: float = 1e-3
    target_sync_every: int = 2500
    steps_per_epoch: int = 2000
    epochs: int = 30
    replay_capacity: int = 100_000
    warmup: int = 5000
    train_every: int = 1
    checkpoint_every: int = 1
    aggregator: str = "sum_fc"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; valid variants: {', '.join(VARIANTS)}")
        if self.reward_mode not in ("unsupervised", "supervised"):
            raise ConfigError(f"unknown reward mode {self.reward_mode!r}; valid: unsupervised, supervised")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        for name in ("batch_size", "target_sync_every", "steps_per_epoch", "epochs",
                     "replay_capacity", "train_every", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.warmup < 0 or self.warmup > self.replay_capacity:
            raise ConfigError("warmup must lie in [0, replay_capacity]")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")

    @property
    def double(self) -> bool:
        return self.variant.startswith("double")

    def architecture(self, **overrides) -> Architecture:
        return Architecture(head=head_for_variant(self.variant), aggregator=self.aggregator, **overrides)


def observation_array(obs) -> np.ndarray:
    stack = getattr(obs, "stack", None)
    if stack is not None:
        return stack
    return np.asarray(obs, dtype=np.float32)


def _batch(observations) -> np.ndarray:
    return np.stack([observation_array(o) for o in observations])


def q_values(net, obs) -> np.ndarray:
    return forward(net, _batch([obs]), "eval")[0].double().numpy()


def select_action(net, state, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if not 0.0 <= eps <= 1.0:
        raise ConfigError("eps must be in [0, 1]")
    if eps > 0 and rng.random() < eps:
        n = _n_actions(net)
        return int(rng.integers(n))
    return int(np.argmax(q_values(net, state)))


def _n_actions(net) -> int:
    arch = getattr(net, "arch", None)
    if arch is not None:
        return arch.n_actions
    return int(getattr(net, "n_actions"))


def td_targets(double: bool, online, target, next_obs, rewards, terminals, gamma: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    if gamma == 0.0 or terminals.all():
        return rewards.copy()
    q_target = forward(target, next_obs, "eval").double().numpy()
    if double:
        chosen = forward(online, next_obs, "eval").double().numpy().argmax(axis=1)
        boot = q_target[np.arange(len(chosen)), chosen]
    else:
        boot = q_target.max(axis=1)
    return np.where(terminals, rewards, rewards + gamma * boot)


def td_target(variant: str, online, target, transition: Transition, gamma: float) -> float:
    """Bellman target for a single transition."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    next_obs = _batch([transition.next_state])
    return float(td_targets(variant.startswith("double"), online, target, next_obs,
                            [transition.reward], [transition.terminal], gamma)[0])


@dataclass
class TrainResult:
    params: QNetworkParams
    log: list = field(default_factory=list)
    global_step: int = 0
    target: torch.nn.Module | None = None


def _mean(values):
    return float(np.mean(values)) if values else None


def train(
    env,
    cfg: AgentConfig,
    schedule: ExplorationSchedule = ExplorationSchedule(),
    *,
    net: torch.nn.Module | None = None,
    arch: Architecture | None = None,
    checkpoint: str | Path | None = None,
    log_path: str | Path | None = None,
    meta: dict | None = None,
    timed: bool = True,
) -> TrainResult:
    """Run epsilon-greedy deep Q-learning on ``env``.

    ``env`` exposes ``reset(rng) -> obs`` and
    ``step(action) -> (obs, reward, terminal, info)``. Observations are either
    arrays or objects with a ``stack`` array. Without ``net`` a
    :class:`QNetwork` is built from ``arch`` (default: the variant's head).
    """
    rng = np.random.default_rng(cfg.seed)
    online = net if net is not None else QNetwork(arch or cfg.architecture(), seed=cfg.seed)
    target = copy.deepcopy(online)
    optimizer = make_optimizer(online, cfg.lr)
    params = QNetworkParams(online, optimizer, dict(meta or {}, variant=cfg.variant,
                                                    reward_mode=cfg.reward_mode))
    buffer = ReplayBuffer(cfg.replay_capacity)
    result = TrainResult(params, target=target)
    log_file = None
    if log_path is not None:
        try:
            log_file = open(log_path, "w")
        except OSError as exc:
            raise IOFailure(f"cannot open training log {log_path}: {exc}") from exc

    def save(epoch):
        if checkpoint is None or not isinstance(online, QNetwork):
            return
        params.meta.update(epoch=epoch, global_step=result.global_step)
        save_checkpoint(params, checkpoint)

    obs = env.reset(rng)
    ep_score = 0.0
    epoch = 0
    try:
        for epoch in range(cfg.epochs):
            started = time.perf_counter()
            losses, scores, finals = [], [], []
            for _ in range(cfg.steps_per_epoch):
                eps = schedule.value(result.global_step / cfg.steps_per_epoch)
                action = select_action(online, obs, eps, rng)
                nxt, reward, terminal, info = env.step(action)
                buffer.push(Transition(obs, action, float(reward), nxt, bool(terminal)))
                ep_score += reward
                result.global_step += 1
                if terminal:
                    scores.append(ep_score)
                    if "distance" in info:
                        finals.append(info["distance"])
                    obs = env.reset(rng)
                    ep_score = 0.0
                else:
                    obs = nxt

                ready = len(buffer) >= max(cfg.warmup, cfg.batch_size)
                if ready and result.global_step % cfg.train_every == 0:
                    try:
                        losses.append(_update(online, target, optimizer, buffer, cfg, rng))
                    except NumericError as exc:
                        where = f"epoch {epoch}, step {result.global_step}"
                        last = f"; last good checkpoint: {checkpoint}" if checkpoint and Path(checkpoint).exists() else ""
                        raise NumericError(f"training aborted at {where}: {exc}{last}", layer=exc.layer) from exc
                if result.global_step % cfg.target_sync_every == 0:
                    target.load_state_dict(online.state_dict())

            record = {
                "epoch": epoch,
                "eps": schedule.value(epoch),
                "mean_loss": _mean(losses),
                "mean_score": _mean(scores),
                "mean_final_D": _mean(finals),
                "episodes": len(scores),
                "wall_s": time.perf_counter() - started if timed else 0.0,
            }
            result.log.append(record)
            log.info("epoch %d: %s", epoch, record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            if (epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs:
                save(epoch)
    except KeyboardInterrupt:
        save(epoch)
        raise
    finally:
        if log_file is not None:
            log_file.close()
    return result


def _update(online, target, optimizer, buffer: ReplayBuffer, cfg: AgentConfig, rng) -> float:
    batch = buffer.sample(cfg.batch_size, rng)
    states = _batch([t.state for t in batch])
    next_states = _batch([t.next_state for t in batch])
    actions = np.array([t.action for t in batch])
    targets = td_targets(
        cfg.double, online, target, next_states,
        [t.reward for t in batch], [t.terminal for t in batch], cfg.gamma,
    )
    mask = np.zeros((len(batch), _n_actions(online)), dtype=np.float32)
    mask[np.arange(len(batch)), actions] = 1.0
    loss, _ = backward(online, states, mask, targets)
    adam_step(online, optimizer)
    return loss


def greedy_policy(net):
    rng = np.random.default_rng(0)
    return lambda state: select_action(net, state, 0.0, rng)


def config_dict(cfg) -> dict:
    return asdict(cfg)
