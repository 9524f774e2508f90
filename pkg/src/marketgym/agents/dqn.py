"""Deep Q-learning with a target network and epsilon-greedy exploration."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged
from .common import (
    AgentConfig,
    CheckpointTracker,
    Policy,
    RunningNormalizer,
    require_action_kind,
)
from .nets import Adam, backward_batch, flatten_params, forward_batch, init_mlp, soft_update
from .replay import ReplayBuffer


def _epsilon(cfg: AgentConfig, step: int) -> float:
    horizon = max(1, int(cfg.epsilon_fraction * cfg.total_steps))
    frac = min(1.0, step / horizon)
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


def train_dqn(env, config: AgentConfig, val_env=None, history=None,
              checkpoint_log=None) -> Policy:
    """Q-learning over a discrete-action env; returns the greedy policy.

    TD target: r + gamma * max_a' Q_target(s', a') * (1 - done); squared
    loss; Polyak target updates each step.
    """
    require_action_kind(env, "discrete", "dqn")
    rng = np.random.default_rng(config.rng_seed)
    actions = list(env.actions)
    obs_dim = env.observation_size
    sizes = (obs_dim, *config.hidden, len(actions))
    q = init_mlp(sizes, rng, config.hidden_activation)
    q_target = q.copy()
    opt = Adam(q.parameters(), config.critic_lr)
    norm = RunningNormalizer(obs_dim) if config.normalize_obs else None

    buffer = ReplayBuffer(config.buffer_capacity, obs_dim, None, rng)
    tracker = CheckpointTracker(val_env, config.checkpoint_every)

    def snapshot():
        return ([p.copy() for p in q.parameters()], norm.copy() if norm else None)

    def live_policy() -> Policy:
        return Policy("dqn", {"q": q}, {"kind": "discrete", "actions": actions}, norm)

    def whiten(x):
        return norm.normalize(x) if norm else x

    obs = env.reset()
    if norm:
        norm.update(obs)
    episode = 0
    episodic_return = 0.0
    losses: list[float] = []

    for step in range(1, config.total_steps + 1):
        if step <= config.warmup_steps:
            idx = int(rng.integers(len(actions)))
        elif rng.random() < _epsilon(config, step):
            idx = int(rng.integers(len(actions)))
        else:
            qs, _ = forward_batch(q, whiten(obs)[None, :])
            idx = int(np.argmax(qs[0]))

        outcome = env.step(actions[idx])
        buffer.add(obs, idx, outcome.reward, outcome.observation, outcome.done)
        if norm:
            norm.update(outcome.observation)
        episodic_return += outcome.reward
        obs = outcome.observation

        if outcome.done:
            if history is not None:
                history.append({
                    "global_step": step,
                    "episode": episode,
                    "episodic_return": episodic_return,
                    "loss_q": float(np.mean(losses)) if losses else float("nan"),
                })
            losses = []
            episode += 1
            episodic_return = 0.0
            obs = env.reset()
            if norm:
                norm.update(obs)

        if step > config.warmup_steps and len(buffer) >= config.batch_size:
            batch = buffer.sample(config.batch_size)
            bo = whiten(batch["obs"])
            bn = whiten(batch["next_obs"])
            q_next, _ = forward_batch(q_target, bn)
            targets = batch["rewards"] + config.gamma * (1.0 - batch["dones"]) * q_next.max(axis=1)
            q_all, cache = forward_batch(q, bo)
            rows = np.arange(config.batch_size)
            chosen = batch["actions"].astype(np.int64)
            td = q_all[rows, chosen] - targets
            loss = float(np.mean(td * td))
            if not np.isfinite(loss):
                raise TrainingDiverged(step, f"non-finite TD loss {loss}")
            grad_out = np.zeros_like(q_all)
            grad_out[rows, chosen] = 2.0 * td / config.batch_size
            grads, _ = backward_batch(q, cache, grad_out)
            opt.step(q.parameters(), grads)
            soft_update(q_target, q, config.tau)
            losses.append(loss)
            if step % 250 == 0 and not np.isfinite(flatten_params(q)).all():
                raise TrainingDiverged(step, "non-finite network parameters")

        if tracker.due(step, config.total_steps):
            tracker.record(step, live_policy(), snapshot())

    extras = {}
    if tracker.active and tracker.best_snapshot is not None:
        params, best_norm = tracker.best_snapshot
        for p, saved in zip(q.parameters(), params):
            p[...] = saved
        norm = best_norm
        tracker.finalize()
        extras["selected_checkpoint_step"] = tracker.best_step
        if checkpoint_log is not None:
            checkpoint_log.extend(tracker.rows)

    return Policy("dqn", {"q": q.copy()}, {"kind": "discrete", "actions": actions},
                  norm.copy() if norm else None, extras)
