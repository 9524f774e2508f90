"""From-scratch deep RL agents over the trading env contract."""

from .common import AgentConfig, Policy, RandomPolicy, act, load_policy, save_policy
from .ddpg import train_ddpg
from .dqn import train_dqn
from .nets import Adam, Mlp, init_mlp, mlp_forward, mlp_gradients
from .ppo import train_ppo
from .replay import ReplayBuffer
from .td3 import train_td3

__all__ = [
    "AgentConfig",
    "Policy",
    "RandomPolicy",
    "act",
    "load_policy",
    "save_policy",
    "train_dqn",
    "train_ddpg",
    "train_td3",
    "train_ppo",
    "Adam",
    "Mlp",
    "init_mlp",
    "mlp_forward",
    "mlp_gradients",
    "ReplayBuffer",
]
