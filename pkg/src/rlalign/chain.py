"""A tiny deterministic chain MDP with a value-iteration oracle.

States ``0..n-1`` are one-hot encoded; action 0 moves left (clamped at 0),
action 1 moves right. Entering the last state pays ``reward`` and ends the
episode. Episodes start uniformly in the non-terminal states so every
state-action pair keeps being visited. Used to validate the Q-learning
wiring against exact optimal values.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn


class ChainMDP:
    n_actions = 2

    def __init__(self, n_states: int = 5, reward: float = 1.0):
        if n_states < 2:
            raise ValueError("chain needs at least two states")
        self.n_states = n_states
        self.reward = reward
        self.state = 0
        self._rng = None

    def transition(self, s: int, a: int) -> tuple[int, float, bool]:
        nxt = max(s - 1, 0) if a == 0 else s + 1
        terminal = nxt == self.n_states - 1
        return nxt, (self.reward if terminal else 0.0), terminal

    def encode(self, s: int) -> np.ndarray:
        return np.eye(self.n_states, dtype=np.float32)[s]

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._rng = rng
        self.state = int(rng.integers(self.n_states - 1))
        return self.encode(self.state)

    def step(self, action: int):
        self.state, r, terminal = self.transition(self.state, int(action))
        return self.encode(self.state), r, terminal, {}


def value_iteration(mdp: ChainMDP, gamma: float, tol: float = 1e-12) -> np.ndarray:
    """Optimal ``Q[s, a]`` for the non-terminal states."""
    n = mdp.n_states
    v = np.zeros(n)
    while True:
        q = np.zeros((n - 1, mdp.n_actions))
        for s in range(n - 1):
            for a in range(mdp.n_actions):
                nxt, r, term = mdp.transition(s, a)
                q[s, a] = r + (0.0 if term else gamma * v[nxt])
        new_v = np.append(q.max(axis=1), 0.0)
        if np.max(np.abs(new_v - v)) < tol:
            return q
        v = new_v


class MLPQ(nn.Module):
    """One hidden ReLU layer mapping an observation vector to action values."""

    def __init__(self, n_in: int, n_actions: int, hidden: int = 32, seed: int = 0):
        super().__init__()
        self.n_actions = n_actions
        gen = torch.Generator().manual_seed(seed)
        self.hidden = nn.Linear(n_in, hidden)
        self.out = nn.Linear(hidden, n_actions)
        for layer in (self.hidden, self.out):
            nn.init.kaiming_uniform_(layer.weight, nonlinearity="relu", generator=gen)
            nn.init.zeros_(layer.bias)

    def forward(self, x):
        return self.out(torch.relu(self.hidden(x)))


def q_table(net: MLPQ, mdp: ChainMDP) -> np.ndarray:
    with torch.no_grad():
        obs = torch.as_tensor(np.stack([mdp.encode(s) for s in range(mdp.n_states - 1)]))
        return net(obs).double().numpy()
