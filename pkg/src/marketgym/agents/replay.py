"""FIFO transition store for off-policy agents."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class ReplayBuffer:
    """Preallocated ring buffer of (obs, action, reward, next_obs, done).

    Eviction is strictly FIFO: once full, each insert overwrites the oldest
    transition.  ``action_dim=None`` stores scalar (discrete-index) actions.
    """

    def __init__(self, capacity: int, obs_dim: int, action_dim: int | None,
                 rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self._rng = rng
        self._obs = np.zeros((capacity, obs_dim))
        self._next_obs = np.zeros((capacity, obs_dim))
        if action_dim is None:
            self._actions = np.zeros(capacity, dtype=np.int64)
        else:
            self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._dones = np.zeros(capacity)
        self._head = 0
        self._size = 0
        self._inserted = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, action, reward, next_obs, done) -> None:
        obs = np.asarray(obs, dtype=np.float64).reshape(-1)
        next_obs = np.asarray(next_obs, dtype=np.float64).reshape(-1)
        if obs.size != self.obs_dim or next_obs.size != self.obs_dim:
            raise ShapeMismatch(f"observation length {obs.size}, want {self.obs_dim}")
        i = self._head
        self._obs[i] = obs
        self._next_obs[i] = next_obs
        if self.action_dim is None:
            self._actions[i] = int(action)
        else:
            a = np.asarray(action, dtype=np.float64).reshape(-1)
            if a.size != self.action_dim:
                raise ShapeMismatch(f"action length {a.size}, want {self.action_dim}")
            self._actions[i] = a
        self._rewards[i] = float(reward)
        self._dones[i] = 1.0 if done else 0.0
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self._inserted += 1

    def sample(self, batch_size: int) -> dict:
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self._size < batch_size:
            raise ValueError(f"buffer holds {self._size} transitions, need {batch_size}")
        idx = self._rng.integers(0, self._size, size=batch_size)
        return {
            "obs": self._obs[idx],
            "actions": self._actions[idx],
            "rewards": self._rewards[idx],
            "next_obs": self._next_obs[idx],
            "dones": self._dones[idx],
        }

    def dump(self) -> dict:
        """Stored transitions in insertion order (oldest first)."""
        if self._size < self.capacity:
            order = np.arange(self._size)
        else:
            order = np.arange(self.capacity)
            order = (order + self._head) % self.capacity
        return {
            "obs": self._obs[order].copy(),
            "actions": self._actions[order].copy(),
            "rewards": self._rewards[order].copy(),
            "next_obs": self._next_obs[order].copy(),
            "dones": self._dones[order].copy(),
        }
