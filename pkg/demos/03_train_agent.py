"""
Training a PPO agent on a single-stock environment
==================================================

All four agents (dqn, ddpg, td3, ppo) are plain numpy implementations
behind one interface: build an env, describe hyperparameters in an
AgentConfig, call the trainer, get back a serializable Policy.  Here
PPO learns to trade one synthetic asset, with a validation env picking
the best checkpoint, and the result is compared against acting randomly.
"""

import numpy as np

from marketgym import (
    ActionSpec,
    CostModel,
    EnvConfig,
    RewardSpec,
    SplitSpec,
    TurbulenceGate,
    compute_macd,
    compute_rsi,
    split,
)
from marketgym.agents import AgentConfig, RandomPolicy, act, train_ppo
from marketgym.agents.common import dollar_sharpe, run_eval_episode
from marketgym.synth import generate_synthetic_frame

frame = compute_rsi(compute_macd(generate_synthetic_frame(n_assets=1, n_days=500)))
ts = frame.timestamps

# Chronological split: fit on the first 350 days, checkpoint on the next
# 75, hold out the last 75 for the final evaluation.
spec = SplitSpec(
    train=(ts[0], ts[350]),
    validation=(ts[350], ts[425]),
    test=(ts[425], ts[-1] + (ts[-1] - ts[-2])),
)
train_frame, val_frame, test_frame = split(frame, spec)

env_cfg = EnvConfig(
    task="single_stock",
    action=ActionSpec("discrete", dimension=1, k=10),
    reward=RewardSpec("delta_value"),   # scaling defaults to 1e-4
    costs=CostModel(per_share_rate=0.001),
    gate=TurbulenceGate(enabled=False),
    initial_capital=100_000.0,
)
train_env = env_cfg.build(train_frame)
val_env = env_cfg.build(val_frame)
test_env = env_cfg.build(test_frame)

config = AgentConfig(
    algorithm="ppo",
    hidden=(64, 64),
    actor_lr=3e-4,
    critic_lr=1e-3,
    total_steps=4000,
    rollout_steps=256,
    checkpoint_every=500,    # evaluate on val_env every 500 steps
    rng_seed=11,
)

# history collects one row per episode; checkpoint_log one row per
# validation pass.  The returned policy is the checkpoint with the best
# validation Sharpe, not necessarily the last one.
history, checkpoints = [], []
policy = train_ppo(train_env, config, val_env=val_env,
                   history=history, checkpoint_log=checkpoints)
print("episodes seen:      ", len(history))
print("validation passes:  ", len(checkpoints))
print("selected checkpoint:", policy.extras["selected_checkpoint_step"])

# The policy acts greedily through `act`; run_eval_episode drives a full
# deterministic episode and returns the account value curve.
values = run_eval_episode(test_env, policy)
print("test episode: start %.0f, end %.0f" % (values[0], values[-1]))
print("trained test sharpe: %.3f" % dollar_sharpe(values))

# Sanity bar: the same env driven by seeded random policies.  A trained
# agent should beat the median random outcome on data it fit.
trained_sharpe = dollar_sharpe(run_eval_episode(env_cfg.build(train_frame), policy))
random_sharpes = sorted(
    dollar_sharpe(run_eval_episode(env_cfg.build(train_frame), RandomPolicy(train_env, s)))
    for s in range(10))
median = 0.5 * (random_sharpes[4] + random_sharpes[5])
print("train sharpe %.3f vs random median %.3f" % (trained_sharpe, median))

# Policies are greedy functions of the observation.
obs = test_env.reset()
print("greedy first action on the test env:", act(policy, obs), "shares")
