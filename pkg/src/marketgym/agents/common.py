"""Shared agent plumbing: config, normalization, policies, checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import IncompatibleActionSpace, ShapeMismatch
from ..serialize import atomic_write_text, canonical_json
from .nets import Mlp, mlp_forward

ALGORITHMS = ("dqn", "ddpg", "td3", "ppo")

POLICY_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AgentConfig:
    """Hyperparameters for all four algorithms; unused fields are ignored."""

    algorithm: str
    hidden: tuple = (64, 64)
    hidden_activation: str = "relu"
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 64
    total_steps: int = 10_000
    buffer_capacity: int = 100_000
    warmup_steps: int = 1_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.1
    exploration_sigma: float = 0.1
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    clip_ratio: float = 0.2
    ppo_epochs: int = 10
    gae_lambda: float = 0.95
    rollout_steps: int = 256
    minibatch_size: int = 64
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    normalize_obs: bool = True
    rng_seed: int = 0
    checkpoint_every: int = 0   # 0 disables mid-run validation checkpoints

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be > 0")
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be > 0")
        if min(self.batch_size, self.total_steps, self.buffer_capacity,
               self.rollout_steps, self.minibatch_size, self.ppo_epochs,
               self.policy_delay) < 1:
            raise ValueError("sizes and step counts must be >= 1")
        if self.warmup_steps < 0 or self.checkpoint_every < 0:
            raise ValueError("warmup_steps and checkpoint_every must be >= 0")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def with_seed(self, seed: int) -> "AgentConfig":
        return replace(self, rng_seed=int(seed))


class RunningNormalizer:
    """Welford running mean/variance used to whiten observations."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros(dim)

    def update(self, obs: np.ndarray) -> None:
        obs = np.asarray(obs, dtype=np.float64).reshape(-1)
        if obs.size != self.dim:
            raise ShapeMismatch(f"observation length {obs.size}, want {self.dim}")
        self.count += 1
        delta = obs - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (obs - self.mean)

    @property
    def var(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.dim)
        return self._m2 / (self.count - 1)

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        return (obs - self.mean) / np.sqrt(self.var + 1e-8)

    def state(self) -> dict:
        return {"count": self.count, "mean": self.mean.tolist(), "m2": self._m2.tolist()}

    def copy(self) -> "RunningNormalizer":
        return RunningNormalizer.from_state(self.state())

    @classmethod
    def from_state(cls, state: dict) -> "RunningNormalizer":
        norm = cls(len(state["mean"]))
        norm.count = int(state["count"])
        norm.mean = np.asarray(state["mean"], dtype=np.float64)
        norm._m2 = np.asarray(state["m2"], dtype=np.float64)
        return norm


@dataclass
class Policy:
    """Immutable trained artifact; act() is deterministic in eval mode."""

    algorithm: str
    nets: dict
    action_meta: dict
    normalizer: RunningNormalizer | None = None
    extras: dict = field(default_factory=dict)
    deterministic: bool = True

    @property
    def obs_dim(self) -> int:
        return next(iter(self.nets.values())).in_dim


def _prepare(policy: Policy, observation) -> np.ndarray:
    obs = np.asarray(observation, dtype=np.float64).reshape(-1)
    if obs.size != policy.obs_dim:
        raise ShapeMismatch(f"observation length {obs.size}, want {policy.obs_dim}")
    if policy.normalizer is not None:
        obs = policy.normalizer.normalize(obs)
    return obs


def act(policy: Policy, observation):
    """Eval-mode action: greedy (DQN), noiseless (DDPG/TD3), mode (PPO)."""
    obs = _prepare(policy, observation)
    algo = policy.algorithm
    if algo == "dqn":
        q = mlp_forward(policy.nets["q"], obs)
        return policy.action_meta["actions"][int(np.argmax(q))]
    if algo in ("ddpg", "td3"):
        return mlp_forward(policy.nets["actor"], obs)
    if algo == "ppo":
        out = mlp_forward(policy.nets["pi"], obs)
        if policy.action_meta["kind"] == "discrete":
            return policy.action_meta["actions"][int(np.argmax(out))]
        return np.clip(out, -1.0, 1.0)
    raise ValueError(f"unknown algorithm {algo!r}")


class RandomPolicy:
    """Seeded uniform-random actor over an env's action space; the
    no-skill baseline for sanity bars."""

    def __init__(self, env, seed: int):
        self._rng = np.random.default_rng(seed)
        self.kind = env.action_kind
        if self.kind == "discrete":
            self._actions = list(env.actions)
        else:
            self._dim = env.action_dim

    def act(self, observation):
        if self.kind == "discrete":
            return self._actions[int(self._rng.integers(len(self._actions)))]
        return self._rng.uniform(-1.0, 1.0, size=self._dim)


def random_env_action(env, rng: np.random.Generator):
    if env.action_kind == "discrete":
        acts = env.actions
        return acts[int(rng.integers(len(acts)))]
    return rng.uniform(-1.0, 1.0, size=env.action_dim)


def require_action_kind(env, kind: str, algorithm: str) -> None:
    if env.action_kind != kind:
        raise IncompatibleActionSpace(
            f"{algorithm} needs {kind} actions, env provides {env.action_kind}")


# --- evaluation and checkpoint selection -------------------------------------


def run_eval_episode(env, actor) -> np.ndarray:
    """Deterministic episode; returns the per-step value series.

    ``actor`` is a Policy or anything with .act(obs).  Envs that track
    portfolio values report those; otherwise cumulative reward is used.
    """
    step_fn = (lambda o: act(actor, o)) if isinstance(actor, Policy) else actor.act
    obs = env.reset()
    total = [0.0]
    done = False
    while not done:
        outcome = env.step(step_fn(obs))
        obs = outcome.observation
        total.append(total[-1] + outcome.reward)
        done = outcome.done
    if hasattr(env, "values"):
        return env.values()
    return np.asarray(total)


def dollar_sharpe(values: np.ndarray) -> float:
    """Mean over std of per-step value differences; 0 when flat."""
    diffs = np.diff(np.asarray(values, dtype=np.float64))
    if len(diffs) < 2:
        return 0.0
    std = diffs.std(ddof=1)
    if std == 0.0:
        return 0.0
    return float(diffs.mean() / std)


class CheckpointTracker:
    """Keeps the parameter snapshot with the best validation Sharpe."""

    def __init__(self, val_env, every: int):
        self.val_env = val_env
        self.every = every
        self.rows: list[dict] = []
        self.best_sharpe = None
        self.best_snapshot = None
        self.best_step = None

    @property
    def active(self) -> bool:
        return self.val_env is not None and self.every > 0

    def due(self, step: int, total: int) -> bool:
        return self.active and (step % self.every == 0 or step == total)

    def record(self, step: int, policy: Policy, snapshot) -> None:
        sharpe = dollar_sharpe(run_eval_episode(self.val_env, policy))
        self.rows.append({"step": step, "val_sharpe": sharpe})
        if self.best_sharpe is None or sharpe > self.best_sharpe:
            self.best_sharpe = sharpe
            self.best_snapshot = snapshot
            self.best_step = step

    def finalize(self) -> None:
        for row in self.rows:
            row["selected"] = row["step"] == self.best_step
        # ties keep the earliest checkpoint; mark only the first
        seen = False
        for row in self.rows:
            if row["selected"] and seen:
                row["selected"] = False
            elif row["selected"]:
                seen = True


# --- serialization ------------------------------------------------------------


def _net_to_dict(net: Mlp) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d: dict) -> Mlp:
    return Mlp(
        tuple(d["layer_sizes"]),
        d["hidden_activation"],
        d["output_activation"],
        [np.asarray(w, dtype=np.float64) for w in d["weights"]],
        [np.asarray(b, dtype=np.float64) for b in d["biases"]],
    )


def policy_to_dict(policy: Policy) -> dict:
    return {
        "schema_version": POLICY_SCHEMA_VERSION,
        "algorithm": policy.algorithm,
        "deterministic": policy.deterministic,
        "action_meta": policy.action_meta,
        "normalizer": policy.normalizer.state() if policy.normalizer else None,
        "nets": {name: _net_to_dict(net) for name, net in policy.nets.items()},
        "extras": policy.extras,
    }


def policy_from_dict(d: dict) -> Policy:
    if d.get("schema_version") != POLICY_SCHEMA_VERSION:
        raise ValueError(f"unsupported policy schema_version {d.get('schema_version')!r}")
    norm = d.get("normalizer")
    return Policy(
        algorithm=d["algorithm"],
        nets={name: _net_from_dict(nd) for name, nd in d["nets"].items()},
        action_meta=d["action_meta"],
        normalizer=RunningNormalizer.from_state(norm) if norm else None,
        extras=d.get("extras", {}),
        deterministic=d.get("deterministic", True),
    )


def save_policy(policy: Policy, path) -> None:
    atomic_write_text(path, canonical_json(policy_to_dict(policy)))


def load_policy(path) -> Policy:
    with open(path, "r", encoding="utf-8") as fh:
        return policy_from_dict(json.load(fh))
