"""Declarative run configuration: flat ``key = value`` lines, dotted sections.

A config file drives the whole pipeline (ingest, train, backtest, compare).
Values stay strings internally so parse -> emit -> parse is the identity;
typed accessors convert on demand and raise ConfigError with the offending
key on any problem.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

from .errors import ConfigError
from .execution import CostModel
from .market_data import CANONICAL_COLUMNS, GRANULARITIES, SplitSpec, rolling_windows
from .trading_env import ActionSpec, EnvConfig, RewardSpec, TurbulenceGate

_SCALAR_KEYS = {
    "data.csv",
    "data.granularity",
    "data.forward_fill",
    "split.train_start",
    "split.train_end",
    "split.val_end",
    "split.test_end",
    "rolling.train_len",
    "rolling.val_len",
    "rolling.test_len",
    "rolling.stride",
    "rolling.window",
    "env.task",
    "env.action",
    "env.k",
    "env.reward",
    "env.reward_scaling",
    "env.reward_window",
    "env.capital",
    "env.cost.flat_fee",
    "env.cost.per_share_rate",
    "env.cost.half_spread",
    "env.gate.enabled",
    "env.gate.lookback",
    "env.gate.threshold",
    "env.gate.ridge",
    "agent.algorithm",
    "agent.hidden",
    "agent.hidden_activation",
    "agent.actor_lr",
    "agent.critic_lr",
    "agent.gamma",
    "agent.tau",
    "agent.batch_size",
    "agent.total_steps",
    "agent.buffer_capacity",
    "agent.warmup_steps",
    "agent.epsilon_start",
    "agent.epsilon_end",
    "agent.epsilon_fraction",
    "agent.exploration_sigma",
    "agent.policy_delay",
    "agent.target_noise",
    "agent.noise_clip",
    "agent.clip_ratio",
    "agent.ppo_epochs",
    "agent.gae_lambda",
    "agent.rollout_steps",
    "agent.minibatch_size",
    "agent.entropy_coef",
    "agent.value_coef",
    "agent.normalize_obs",
    "agent.rng_seed",
    "agent.checkpoint_every",
    "output.dir",
    "output.formats",
}

_BASELINE_FIELDS = {
    "name",
    "variant",
    "rebalance_every",
    "lookback",
    "top_k",
    "risk_aversion",
    "estimation_window",
    "ridge",
}

_AGENT_FIELD_TYPES = {
    "hidden_activation": str,
    "actor_lr": float,
    "critic_lr": float,
    "gamma": float,
    "tau": float,
    "batch_size": int,
    "total_steps": int,
    "buffer_capacity": int,
    "warmup_steps": int,
    "epsilon_start": float,
    "epsilon_end": float,
    "epsilon_fraction": float,
    "exploration_sigma": float,
    "policy_delay": int,
    "target_noise": float,
    "noise_clip": float,
    "clip_ratio": float,
    "ppo_epochs": int,
    "gae_lambda": float,
    "rollout_steps": int,
    "minibatch_size": int,
    "entropy_coef": float,
    "value_coef": float,
    "rng_seed": int,
    "checkpoint_every": int,
}


def _known_key(key: str) -> bool:
    if key in _SCALAR_KEYS:
        return True
    parts = key.split(".")
    if parts[0] == "data" and len(parts) == 3 and parts[1] == "schema":
        return parts[2] in CANONICAL_COLUMNS
    if parts[0] == "baseline" and len(parts) == 3 and parts[1].isdigit():
        return parts[2] in _BASELINE_FIELDS
    return False


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines into an ordered string dict.

    Blank lines and ``#`` comments are skipped; duplicate or unknown keys
    are rejected.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _known_key(key):
            raise ConfigError(key, "unknown configuration key")
        if key in values:
            raise ConfigError(key, "duplicate key")
        if not value:
            raise ConfigError(key, "empty value")
        values[key] = value
    return values


def emit_config(values: dict) -> str:
    lines = [f"{key} = {values[key]}" for key in sorted(values)]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RunConfig:
    """Parsed config plus the directory its relative paths resolve against."""

    values: dict
    base_dir: str = "."

    def __post_init__(self):
        split_keys = any(k.startswith("split.") for k in self.values)
        rolling_keys = any(k.startswith("rolling.") for k in self.values)
        if split_keys and rolling_keys:
            raise ConfigError("split", "give either split.* or rolling.*, not both")
        if not split_keys and not rolling_keys:
            raise ConfigError("split", "one of split.* or rolling.* is required")

    # --- low-level accessors

    def _raw(self, key: str, default=None):
        return self.values.get(key, default)

    def _require(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(key, "required key is missing")
        return self.values[key]

    def _typed(self, key: str, kind, default):
        raw = self.values.get(key)
        if raw is None:
            return default
        try:
            if kind is bool:
                if raw not in ("true", "false"):
                    raise ValueError
                return raw == "true"
            if kind is float:
                value = float(raw)
                if math.isnan(value):
                    raise ValueError
                return value
            return kind(raw)
        except ValueError:
            raise ConfigError(key, f"cannot parse {raw!r} as {kind.__name__}") from None

    # --- data section

    def data_path(self) -> str:
        raw = self._require("data.csv")
        if os.path.isabs(raw):
            return raw
        root = os.environ.get("MARKETGYM_DATA_DIR") or self.base_dir
        return os.path.join(root, raw)

    def granularity(self) -> str:
        g = self._raw("data.granularity", "daily")
        if g not in GRANULARITIES:
            raise ConfigError("data.granularity", f"must be one of {GRANULARITIES}")
        return g

    def schema(self) -> dict:
        prefix = "data.schema."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def forward_fill(self) -> bool:
        return self._typed("data.forward_fill", bool, False)

    # --- split section

    def split_for(self, frame) -> SplitSpec:
        if any(k.startswith("split.") for k in self.values):
            start = self._require("split.train_start")
            t_end = self._require("split.train_end")
            v_end = self._require("split.val_end")
            e_end = self._require("split.test_end")
            try:
                return SplitSpec((start, t_end), (t_end, v_end), (v_end, e_end))
            except ValueError as exc:
                raise ConfigError("split", str(exc)) from None
        train_len = self._typed("rolling.train_len", int, None)
        val_len = self._typed("rolling.val_len", int, None)
        test_len = self._typed("rolling.test_len", int, None)
        if None in (train_len, val_len, test_len):
            raise ConfigError("rolling", "train_len, val_len, and test_len are required")
        stride = self._typed("rolling.stride", int, test_len)
        window = self._typed("rolling.window", int, 0)
        windows = rolling_windows(frame, train_len, val_len, test_len, stride)
        if not 0 <= window < len(windows):
            raise ConfigError("rolling.window",
                              f"window {window} out of range; frame yields {len(windows)}")
        return windows[window]

    # --- env section

    def env_config(self, n_assets: int) -> EnvConfig:
        task = self._raw("env.task", "multi_stock")
        variant = self._raw("env.action", None)
        if variant is None:
            variant = {"single_stock": "discrete", "multi_stock": "continuous",
                       "portfolio": "simplex"}.get(task)
            if variant is None:
                raise ConfigError("env.task", f"unknown task {task!r}")
        k = self._typed("env.k", int, 10)
        try:
            action = ActionSpec(variant, n_assets,
                                None if variant == "simplex" else k)
            reward = RewardSpec(
                self._raw("env.reward", "delta_value"),
                self._typed("env.reward_scaling", float, None),
                self._typed("env.reward_window", int, 63),
            )
            costs = CostModel(
                self._typed("env.cost.flat_fee", float, 0.0),
                self._typed("env.cost.per_share_rate", float, 0.0),
                self._typed("env.cost.half_spread", float, 0.0),
            )
            gate = TurbulenceGate(
                self._typed("env.gate.enabled", bool, False),
                self._typed("env.gate.lookback", int, 252),
                self._typed("env.gate.threshold", float, 100.0),
                self._typed("env.gate.ridge", float, None),
            )
        except ValueError as exc:
            raise ConfigError("env", str(exc)) from None
        return EnvConfig(task, action, reward, costs, gate,
                         self._typed("env.capital", float, 1_000_000.0))

    # --- agent section

    def agent_config(self, seed_override: int | None = None) -> "AgentConfig":
        from .agents.common import AgentConfig

        algorithm = self._require("agent.algorithm")
        kwargs = {}
        hidden = self._raw("agent.hidden")
        if hidden is not None:
            try:
                kwargs["hidden"] = tuple(int(h) for h in hidden.split(",") if h.strip())
            except ValueError:
                raise ConfigError("agent.hidden", f"cannot parse {hidden!r}") from None
        for name, kind in _AGENT_FIELD_TYPES.items():
            value = self._typed(f"agent.{name}", kind, None)
            if value is not None:
                kwargs[name] = value
        normalize = self._typed("agent.normalize_obs", bool, None)
        if normalize is not None:
            kwargs["normalize_obs"] = normalize
        if seed_override is not None:
            kwargs["rng_seed"] = int(seed_override)
        try:
            return AgentConfig(algorithm, **kwargs)
        except ValueError as exc:
            raise ConfigError("agent", str(exc)) from None

    # --- baselines section

    def baseline_configs(self) -> list:
        from .baselines import StrategyConfig

        indices = sorted({
            int(key.split(".")[1]) for key in self.values if key.startswith("baseline.")
        })
        out = []
        for i in indices:
            prefix = f"baseline.{i}."
            variant = self._require(prefix + "variant")
            kwargs = {
                "rebalance_every": self._typed(prefix + "rebalance_every", int, None),
                "lookback": self._typed(prefix + "lookback", int, 63),
                "top_k": self._typed(prefix + "top_k", int, None),
                "risk_aversion": self._typed(prefix + "risk_aversion", float, 1.0),
                "estimation_window": self._typed(prefix + "estimation_window", int, 252),
                "ridge": self._typed(prefix + "ridge", float, None),
            }
            try:
                config = StrategyConfig(variant, **kwargs)
            except ValueError as exc:
                raise ConfigError(prefix + "variant", str(exc)) from None
            name = self._raw(prefix + "name") or variant.replace("_", "-")
            out.append((name, config))
        return out

    # --- output section

    def output_dir(self, override: str | None = None) -> str:
        raw = override or self._raw("output.dir", "out")
        if os.path.isabs(raw):
            return raw
        return os.path.join(self.base_dir, raw)

    def formats(self) -> tuple:
        raw = self._raw("output.formats", "text,csv,json")
        formats = tuple(f.strip() for f in raw.split(",") if f.strip())
        for f in formats:
            if f not in ("text", "csv", "json"):
                raise ConfigError("output.formats", f"unknown format {f!r}")
        return formats


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    return RunConfig(parse_config(text), os.path.dirname(os.path.abspath(path)))
