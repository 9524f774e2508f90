"""Twin-delayed DDPG: clipped double-Q targets and delayed actor updates."""

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
from .ddpg import critic_input
from .nets import Adam, backward_batch, flatten_params, forward_batch, init_mlp, soft_update
from .replay import ReplayBuffer


def td3_target_actions(actor_target, next_obs: np.ndarray, noise: np.ndarray,
                       noise_clip: float) -> np.ndarray:
    """Smoothed target action: clip(actor_target(s') + clip(noise, +-c), +-1)."""
    base, _ = forward_batch(actor_target, next_obs)
    smoothed = base + np.clip(noise, -noise_clip, noise_clip)
    return np.clip(smoothed, -1.0, 1.0)


def td3_target(critic1_t, critic2_t, next_obs: np.ndarray, next_act: np.ndarray,
               rewards: np.ndarray, dones: np.ndarray, gamma: float):
    """Min of the twin target critics, discounted; returns (y, q1, q2)."""
    x = critic_input(next_obs, next_act)
    q1, _ = forward_batch(critic1_t, x)
    q2, _ = forward_batch(critic2_t, x)
    q_min = np.minimum(q1[:, 0], q2[:, 0])
    return rewards + gamma * (1.0 - dones) * q_min, q1[:, 0], q2[:, 0]


def train_td3(env, config: AgentConfig, val_env=None, history=None,
              checkpoint_log=None) -> Policy:
    """DDPG plus twin critics, target-action smoothing, and policy delay."""
    require_action_kind(env, "box", "td3")
    rng = np.random.default_rng(config.rng_seed)
    obs_dim = env.observation_size
    act_dim = env.action_dim

    actor = init_mlp((obs_dim, *config.hidden, act_dim), rng,
                     config.hidden_activation, "tanh")
    critic1 = init_mlp((obs_dim + act_dim, *config.hidden, 1), rng,
                       config.hidden_activation)
    critic2 = init_mlp((obs_dim + act_dim, *config.hidden, 1), rng,
                       config.hidden_activation)
    actor_t = actor.copy()
    critic1_t = critic1.copy()
    critic2_t = critic2.copy()
    actor_opt = Adam(actor.parameters(), config.actor_lr)
    critic1_opt = Adam(critic1.parameters(), config.critic_lr)
    critic2_opt = Adam(critic2.parameters(), config.critic_lr)
    norm = RunningNormalizer(obs_dim) if config.normalize_obs else None
    buffer = ReplayBuffer(config.buffer_capacity, obs_dim, act_dim, rng)
    tracker = CheckpointTracker(val_env, config.checkpoint_every)

    def whiten(x):
        return norm.normalize(x) if norm else x

    def snapshot():
        return ([p.copy() for p in actor.parameters()], norm.copy() if norm else None)

    def live_policy() -> Policy:
        return Policy("td3", {"actor": actor}, {"kind": "box", "dim": act_dim}, norm)

    obs = env.reset()
    if norm:
        norm.update(obs)
    episode = 0
    episodic_return = 0.0
    updates = 0
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
            noise = config.target_noise * rng.standard_normal((config.batch_size, act_dim))
            next_act = td3_target_actions(actor_t, bn, noise, config.noise_clip)
            targets, q1_t, q2_t = td3_target(critic1_t, critic2_t, bn, next_act,
                                             batch["rewards"], batch["dones"], config.gamma)
            bootstrap = targets - batch["rewards"]
            assert (bootstrap <= config.gamma * (1.0 - batch["dones"]) * q1_t + 1e-12).all()
            assert (bootstrap <= config.gamma * (1.0 - batch["dones"]) * q2_t + 1e-12).all()

            x = critic_input(bo, batch["actions"])
            closs = 0.0
            for critic, opt in ((critic1, critic1_opt), (critic2, critic2_opt)):
                q_pred, cache = forward_batch(critic, x)
                err = q_pred[:, 0] - targets
                closs += float(np.mean(err * err))
                grad_out = (2.0 * err / config.batch_size)[:, None]
                grads, _ = backward_batch(critic, cache, grad_out)
                opt.step(critic.parameters(), grads)
            if not np.isfinite(closs):
                raise TrainingDiverged(step, f"non-finite critic loss {closs}")
            critic_losses.append(closs)
            updates += 1

            if updates % config.policy_delay == 0:
                a_pred, a_cache = forward_batch(actor, bo)
                q_val, q_cache = forward_batch(critic1, critic_input(bo, a_pred))
                actor_losses.append(float(-np.mean(q_val)))
                _, dq_input = backward_batch(critic1, q_cache,
                                             np.full_like(q_val, -1.0 / config.batch_size))
                a_grads, _ = backward_batch(actor, a_cache, dq_input[:, obs_dim:])
                actor_opt.step(actor.parameters(), a_grads)
                soft_update(actor_t, actor, config.tau)
                soft_update(critic1_t, critic1, config.tau)
                soft_update(critic2_t, critic2, config.tau)

            if step % 250 == 0 and not (np.isfinite(flatten_params(actor)).all()
                                        and np.isfinite(flatten_params(critic1)).all()
                                        and np.isfinite(flatten_params(critic2)).all()):
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

    return Policy("td3", {"actor": actor.copy()}, {"kind": "box", "dim": act_dim},
                  norm.copy() if norm else None, extras)
