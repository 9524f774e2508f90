"""Deterministic policy gradient with a Q critic and target networks."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged
from .common import (
    AgentConfig,
    CheckpointTracker,
    Policy,
    RunningNormalizer,
    random_env_action,
    require_action_kind,
)
from .nets import Adam, backward_batch, flatten_params, forward_batch, init_mlp, soft_update
from .replay import ReplayBuffer


def critic_input(obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.concatenate((obs, actions), axis=1)


def ddpg_target(critic_target, actor_target, next_obs: np.ndarray,
                rewards: np.ndarray, dones: np.ndarray, gamma: float) -> np.ndarray:
    """r + gamma * (1 - done) * Q_target(s', actor_target(s'))."""
    next_act, _ = forward_batch(actor_target, next_obs)
    q_next, _ = forward_batch(critic_target, critic_input(next_obs, next_act))
    return rewards + gamma * (1.0 - dones) * q_next[:, 0]


def train_ddpg(env, config: AgentConfig, val_env=None, history=None,
               checkpoint_log=None) -> Policy:
    """Off-policy actor-critic over a box-action env.

    The tanh actor keeps actions in [-1, 1]^n; Gaussian noise explores;
    both networks have Polyak-averaged targets.
    """
    require_action_kind(env, "box", "ddpg")
    rng = np.random.default_rng(config.rng_seed)
    obs_dim = env.observation_size
    act_dim = env.action_dim

    actor = init_mlp((obs_dim, *config.hidden, act_dim), rng,
                     config.hidden_activation, "tanh")
    critic = init_mlp((obs_dim + act_dim, *config.hidden, 1), rng,
                      config.hidden_activation)
    actor_t = actor.copy()
    critic_t = critic.copy()
    actor_opt = Adam(actor.parameters(), config.actor_lr)
    critic_opt = Adam(critic.parameters(), config.critic_lr)
    norm = RunningNormalizer(obs_dim) if config.normalize_obs else None
    buffer = ReplayBuffer(config.buffer_capacity, obs_dim, act_dim, rng)
    tracker = CheckpointTracker(val_env, config.checkpoint_every)

    def whiten(x):
        return norm.normalize(x) if norm else x

    def snapshot():
        return ([p.copy() for p in actor.parameters()], norm.copy() if norm else None)

    def live_policy() -> Policy:
        return Policy("ddpg", {"actor": actor}, {"kind": "box", "dim": act_dim}, norm)

    obs = env.reset()
    if norm:
        norm.update(obs)
    episode = 0
    episodic_return = 0.0
    critic_losses: list[float] = []
    actor_losses: list[float] = []

    for step in range(1, config.total_steps + 1):
        if step <= config.warmup_steps:
            action = random_env_action(env, rng)
        else:
            mean_act, _ = forward_batch(actor, whiten(obs)[None, :])
            noise = config.exploration_sigma * rng.standard_normal(act_dim)
            action = np.clip(mean_act[0] + noise, -1.0, 1.0)

        outcome = env.step(action)
        buffer.add(obs, action, outcome.reward, outcome.observation, outcome.done)
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
                    "loss_critic": float(np.mean(critic_losses)) if critic_losses else float("nan"),
                    "loss_actor": float(np.mean(actor_losses)) if actor_losses else float("nan"),
                })
            critic_losses = []
            actor_losses = []
            episode += 1
            episodic_return = 0.0
            obs = env.reset()
            if norm:
                norm.update(obs)

        if step > config.warmup_steps and len(buffer) >= config.batch_size:
            batch = buffer.sample(config.batch_size)
            bo = whiten(batch["obs"])
            bn = whiten(batch["next_obs"])
            targets = ddpg_target(critic_t, actor_t, bn, batch["rewards"],
                                  batch["dones"], config.gamma)

            q_pred, cache = forward_batch(critic, critic_input(bo, batch["actions"]))
            err = q_pred[:, 0] - targets
            critic_loss = float(np.mean(err * err))
            if not np.isfinite(critic_loss):
                raise TrainingDiverged(step, f"non-finite critic loss {critic_loss}")
            grad_out = (2.0 * err / config.batch_size)[:, None]
            grads, _ = backward_batch(critic, cache, grad_out)
            critic_opt.step(critic.parameters(), grads)

            a_pred, a_cache = forward_batch(actor, bo)
            q_val, q_cache = forward_batch(critic, critic_input(bo, a_pred))
            actor_loss = float(-np.mean(q_val))
            _, dq_input = backward_batch(critic, q_cache,
                                         np.full_like(q_val, -1.0 / config.batch_size))
            a_grads, _ = backward_batch(actor, a_cache, dq_input[:, obs_dim:])
            actor_opt.step(actor.parameters(), a_grads)

            soft_update(critic_t, critic, config.tau)
            soft_update(actor_t, actor, config.tau)
            critic_losses.append(critic_loss)
            actor_losses.append(actor_loss)
            if step % 250 == 0 and not (np.isfinite(flatten_params(actor)).all()
                                        and np.isfinite(flatten_params(critic)).all()):
                raise TrainingDiverged(step, "non-finite network parameters")

        if tracker.due(step, config.total_steps):
            tracker.record(step, live_policy(), snapshot())

    extras = {}
    if tracker.active and tracker.best_snapshot is not None:
        params, best_norm = tracker.best_snapshot
        for p, saved in zip(actor.parameters(), params):
            p[...] = saved
        norm = best_norm
        tracker.finalize()
        extras["selected_checkpoint_step"] = tracker.best_step
        if checkpoint_log is not None:
            checkpoint_log.extend(tracker.rows)

    return Policy("ddpg", {"actor": actor.copy()}, {"kind": "box", "dim": act_dim},
                  norm.copy() if norm else None, extras)
