"""Proximal policy optimization with clipped surrogate and GAE advantages.

Discrete envs get a categorical head, box envs a diagonal-Gaussian head
with a state-independent log-std parameter vector.  The policy and value
function are separate networks; ``value_coef`` scales the value gradient.
"""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged
from .common import AgentConfig, CheckpointTracker, Policy, RunningNormalizer
from .nets import (
    Adam,
    backward_batch,
    categorical_entropy,
    categorical_log_prob,
    categorical_log_prob_grad,
    categorical_sample,
    flatten_params,
    forward_batch,
    gaussian_log_prob,
    gaussian_log_prob_grads,
    init_mlp,
    softmax,
)


def gae_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                   last_value: float, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates over one rollout.

    ``values`` are V(s_t) for each collected state; ``last_value`` bootstraps
    the state following the final transition (0 if that transition ended an
    episode -- the done mask handles it).
    """
    T = len(rewards)
    adv = np.zeros(T)
    next_values = np.append(values[1:], last_value)
    running = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values[t] * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv


def ppo_policy_gradient(pi, obs: np.ndarray, actions, advantages: np.ndarray,
                        kind: str, log_std: np.ndarray | None = None):
    """Gradient of mean(logp * advantage) w.r.t. the policy parameters.

    This is the vanilla policy gradient the clipped surrogate collapses to
    at ratio = 1; returned as (flat gradient over pi params, log_std
    gradient or None).
    """
    out, cache = forward_batch(pi, obs)
    B = obs.shape[0]
    if kind == "discrete":
        idx = np.asarray(actions, dtype=np.int64)
        g_logits = categorical_log_prob_grad(out, idx)
        G = g_logits * (advantages / B)[:, None]
        grads, _ = backward_batch(pi, cache, G)
        return np.concatenate([g.ravel() for g in grads]), None
    d_mean, d_log_std = gaussian_log_prob_grads(out, log_std, np.asarray(actions))
    G = d_mean * (advantages / B)[:, None]
    grads, _ = backward_batch(pi, cache, G)
    g_ls = (d_log_std * (advantages / B)[:, None]).sum(axis=0)
    return np.concatenate([g.ravel() for g in grads]), g_ls


def train_ppo(env, config: AgentConfig, val_env=None, history=None,
              checkpoint_log=None) -> Policy:
    rng = np.random.default_rng(config.rng_seed)
    obs_dim = env.observation_size
    discrete = env.action_kind == "discrete"
    if discrete:
        actions_list = list(env.actions)
        out_dim = len(actions_list)
    else:
        out_dim = env.action_dim

    pi = init_mlp((obs_dim, *config.hidden, out_dim), rng, config.hidden_activation)
    vf = init_mlp((obs_dim, *config.hidden, 1), rng, config.hidden_activation)
    log_std = np.zeros(out_dim) if not discrete else None
    pi_params = pi.parameters() + ([log_std] if log_std is not None else [])
    pi_opt = Adam(pi_params, config.actor_lr)
    vf_opt = Adam(vf.parameters(), config.critic_lr)
    norm = RunningNormalizer(obs_dim) if config.normalize_obs else None
    tracker = CheckpointTracker(val_env, config.checkpoint_every)

    def whiten(x):
        return norm.normalize(x) if norm else np.asarray(x, dtype=np.float64)

    def snapshot():
        return ([p.copy() for p in pi_params], norm.copy() if norm else None)

    def live_policy() -> Policy:
        meta = ({"kind": "discrete", "actions": actions_list} if discrete
                else {"kind": "box", "dim": out_dim})
        return Policy("ppo", {"pi": pi}, meta, norm)

    obs = env.reset()
    if norm:
        norm.update(obs)
    episode = 0
    episodic_return = 0.0
    global_step = 0
    last_pi_loss = float("nan")
    last_v_loss = float("nan")

    while global_step < config.total_steps:
        horizon = min(config.rollout_steps, config.total_steps - global_step)
        R_obs = np.zeros((horizon, obs_dim))
        R_act_idx = np.zeros(horizon, dtype=np.int64)
        R_act_vec = np.zeros((horizon, out_dim))
        R_logp = np.zeros(horizon)
        R_rew = np.zeros(horizon)
        R_done = np.zeros(horizon)
        R_val = np.zeros(horizon)

        for i in range(horizon):
            x = whiten(obs)
            R_obs[i] = x
            out, _ = forward_batch(pi, x[None, :])
            v, _ = forward_batch(vf, x[None, :])
            R_val[i] = v[0, 0]
            if discrete:
                idx = int(categorical_sample(out, rng)[0])
                R_act_idx[i] = idx
                R_logp[i] = categorical_log_prob(out, np.array([idx]))[0]
                action = actions_list[idx]
            else:
                sample = out[0] + np.exp(log_std) * rng.standard_normal(out_dim)
                R_act_vec[i] = sample
                R_logp[i] = gaussian_log_prob(out, log_std, sample[None, :])[0]
                action = np.clip(sample, -1.0, 1.0)

            outcome = env.step(action)
            R_rew[i] = outcome.reward
            R_done[i] = 1.0 if outcome.done else 0.0
            if norm:
                norm.update(outcome.observation)
            episodic_return += outcome.reward
            obs = outcome.observation
            global_step += 1

            if outcome.done:
                if history is not None:
                    history.append({
                        "global_step": global_step,
                        "episode": episode,
                        "episodic_return": episodic_return,
                        "loss_pi": last_pi_loss,
                        "loss_v": last_v_loss,
                    })
                episode += 1
                episodic_return = 0.0
                obs = env.reset()
                if norm:
                    norm.update(obs)

            if tracker.due(global_step, config.total_steps):
                tracker.record(global_step, live_policy(), snapshot())

        if R_done[-1]:
            last_value = 0.0
        else:
            v_last, _ = forward_batch(vf, whiten(obs)[None, :])
            last_value = float(v_last[0, 0])
        adv = gae_advantages(R_rew, R_val, R_done, last_value, config.gamma,
                             config.gae_lambda)
        returns = adv + R_val
        adv_std = adv.std()
        adv_n = (adv - adv.mean()) / (adv_std + 1e-8)

        for _ in range(config.ppo_epochs):
            order = rng.permutation(horizon)
            for start in range(0, horizon, config.minibatch_size):
                mb = order[start:start + config.minibatch_size]
                if len(mb) == 0:
                    continue
                B = len(mb)
                x = R_obs[mb]
                A = adv_n[mb]
                out, cache = forward_batch(pi, x)
                if discrete:
                    logp = categorical_log_prob(out, R_act_idx[mb])
                else:
                    logp = gaussian_log_prob(out, log_std, R_act_vec[mb])
                ratio = np.exp(logp - R_logp[mb])
                surr1 = ratio * A
                clipped = np.clip(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio)
                surr2 = clipped * A
                pi_loss = float(-np.mean(np.minimum(surr1, surr2)))
                if not np.isfinite(pi_loss):
                    raise TrainingDiverged(global_step, f"non-finite policy loss {pi_loss}")
                # gradient flows only where the unclipped branch is active
                coeff = np.where(surr1 <= surr2, ratio * A, 0.0) / B
                if discrete:
                    G = -categorical_log_prob_grad(out, R_act_idx[mb]) * coeff[:, None]
                    if config.entropy_coef:
                        p = softmax(out)
                        lp = np.log(p + 1e-300)
                        H = categorical_entropy(out)
                        G += config.entropy_coef * p * (lp + H[:, None]) / B
                    grads, _ = backward_batch(pi, cache, G)
                    g_all = grads
                else:
                    d_mean, d_ls = gaussian_log_prob_grads(out, log_std, R_act_vec[mb])
                    G = -d_mean * coeff[:, None]
                    grads, _ = backward_batch(pi, cache, G)
                    g_ls = (-d_ls * coeff[:, None]).sum(axis=0)
                    if config.entropy_coef:
                        g_ls -= config.entropy_coef * np.ones(out_dim)
                    g_all = grads + [g_ls]
                pi_opt.step(pi_params, g_all)

                v_pred, v_cache = forward_batch(vf, x)
                v_err = v_pred[:, 0] - returns[mb]
                v_loss = float(np.mean(v_err * v_err))
                if not np.isfinite(v_loss):
                    raise TrainingDiverged(global_step, f"non-finite value loss {v_loss}")
                g_v = (config.value_coef * 2.0 * v_err / B)[:, None]
                v_grads, _ = backward_batch(vf, v_cache, g_v)
                vf_opt.step(vf.parameters(), v_grads)
                last_pi_loss = pi_loss
                last_v_loss = v_loss

        if not np.isfinite(flatten_params(pi)).all():
            raise TrainingDiverged(global_step, "non-finite network parameters")

    extras = {}
    if tracker.active and tracker.best_snapshot is not None:
        params, best_norm = tracker.best_snapshot
        for p, saved in zip(pi_params, params):
            p[...] = saved
        norm = best_norm
        tracker.finalize()
        extras["selected_checkpoint_step"] = tracker.best_step
        if checkpoint_log is not None:
            checkpoint_log.extend(tracker.rows)
    if log_std is not None:
        extras["log_std"] = log_std.tolist()

    meta = ({"kind": "discrete", "actions": actions_list} if discrete
            else {"kind": "box", "dim": out_dim})
    return Policy("ppo", {"pi": pi.copy()}, meta, norm.copy() if norm else None, extras)
