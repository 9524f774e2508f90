"""Command-line pipeline: ingest, train, backtest, compare, demo.

Exit codes: 0 success, 2 validation failure, 3 training divergence,
4 policy/env layout mismatch, 5 report schema mismatch.  Diagnostics go
to stderr; stdout carries only artifact summaries.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import pandas as pd

from . import market_data as md
from . import synth
from .agents.common import (
    RandomPolicy,
    dollar_sharpe,
    load_policy,
    run_eval_episode,
    save_policy,
)
from .agents.ddpg import train_ddpg
from .agents.dqn import train_dqn
from .agents.ppo import train_ppo
from .agents.td3 import train_td3
from .backtest import (
    compare,
    compute_metrics,
    load_report,
    run_backtest,
    write_curve_csv,
    write_report,
)
from .baselines import run_strategy, strategy_warmup
from .errors import (
    ConfigError,
    IncompatibleActionSpace,
    LayoutMismatch,
    MarketGymError,
    ReportSchemaMismatch,
    ShapeMismatch,
    TrainingDiverged,
)
from .runconfig import RunConfig, load_config, parse_config
from .serialize import atomic_write_text, canonical_json

TRAINERS = {"dqn": train_dqn, "ddpg": train_ddpg, "td3": train_td3, "ppo": train_ppo}

LOG_FIELDS = {
    "dqn": ("global_step", "episode", "episodic_return", "loss_q"),
    "ddpg": ("global_step", "episode", "episodic_return", "loss_critic", "loss_actor"),
    "td3": ("global_step", "episode", "episodic_return", "loss_critic", "loss_actor"),
    "ppo": ("global_step", "episode", "episodic_return", "loss_pi", "loss_v"),
}


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, fieldnames, rows) -> None:
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(_format_cell(row.get(name)) for name in fieldnames))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _load_frame(cfg: RunConfig):
    frame = md.ingest_csv(cfg.data_path(), cfg.schema(), cfg.granularity(),
                          cfg.forward_fill())
    frame = md.compute_macd(frame)
    return md.compute_rsi(frame)


def _extended_slice(frame, sub_frame, lead: int):
    """Sub-frame extended backward by ``lead`` rows of history.

    Warm-up rows (turbulence lookback, estimation windows) come from data
    before the target range, so the resulting curve covers it exactly.
    """
    if lead <= 0:
        return sub_frame
    start_ts = sub_frame.timestamps[0]
    i0 = int(frame.timestamps.searchsorted(start_ts))
    if i0 < lead:
        raise ConfigError("split", f"need {lead} rows of history before "
                                   f"{start_ts.date()}, frame has {i0}")
    stop = i0 + sub_frame.n_steps
    return frame.slice_rows(i0 - lead, stop)


# --- commands -----------------------------------------------------------------


def cmd_ingest(cfg: RunConfig, out_dir: str | None = None, quiet: bool = False) -> dict:
    frame = md.ingest_csv(cfg.data_path(), cfg.schema(), cfg.granularity(),
                          cfg.forward_fill())
    out = cfg.output_dir(out_dir)
    os.makedirs(out, exist_ok=True)
    frame_path = os.path.join(out, "frame.csv")
    md.write_canonical_csv(frame, frame_path)
    summary = {
        "n_assets": frame.n_assets,
        "n_steps": frame.n_steps,
        "granularity": frame.granularity,
        "start": frame.timestamps[0].date().isoformat(),
        "end": frame.timestamps[-1].date().isoformat(),
    }
    summary_path = os.path.join(out, "ingest_summary.json")
    atomic_write_text(summary_path, canonical_json(summary))
    _say(quiet, f"wrote {frame_path}")
    _say(quiet, f"wrote {summary_path}")
    _say(quiet, f"n={summary['n_assets']} T={summary['n_steps']} "
                f"{summary['start']}..{summary['end']} ({summary['granularity']})")
    return summary


def cmd_train(cfg: RunConfig, seed: int | None = None, out_dir: str | None = None,
              quiet: bool = False) -> str:
    frame = _load_frame(cfg)
    spec = cfg.split_for(frame)
    train_frame, val_frame, _ = md.split(frame, spec)
    env_cfg = cfg.env_config(frame.n_assets)
    agent_cfg = cfg.agent_config(seed)
    if agent_cfg.checkpoint_every == 0:
        # checkpoint selection is part of the train contract; default to ~10 evals
        agent_cfg = dataclasses.replace(
            agent_cfg, checkpoint_every=max(1, agent_cfg.total_steps // 10))
    train_env = env_cfg.build(train_frame)
    val_env = env_cfg.build(_extended_slice(frame, val_frame, train_env.warm_up))

    out = cfg.output_dir(out_dir)
    os.makedirs(out, exist_ok=True)
    history: list[dict] = []
    checkpoints: list[dict] = []
    log_path = os.path.join(out, "training_log.csv")
    try:
        policy = TRAINERS[agent_cfg.algorithm](
            train_env, agent_cfg, val_env=val_env, history=history,
            checkpoint_log=checkpoints)
    except TrainingDiverged:
        _write_csv(log_path, LOG_FIELDS[agent_cfg.algorithm], history)
        raise
    _write_csv(log_path, LOG_FIELDS[agent_cfg.algorithm], history)
    if checkpoints:
        _write_csv(os.path.join(out, "checkpoints.csv"),
                   ("step", "val_sharpe", "selected"), checkpoints)
    policy_path = os.path.join(out, "policy.json")
    save_policy(policy, policy_path)
    _say(quiet, f"wrote {policy_path}")
    _say(quiet, f"wrote {log_path}")
    if checkpoints:
        _say(quiet, f"wrote {os.path.join(out, 'checkpoints.csv')}")
        _say(quiet, f"selected checkpoint step "
                    f"{policy.extras.get('selected_checkpoint_step')}")
    return policy_path


def cmd_backtest(cfg: RunConfig, policy_path: str | None = None,
                 out_dir: str | None = None, quiet: bool = False) -> "MetricsReport":
    out = cfg.output_dir(out_dir)
    policy_path = policy_path or os.path.join(out, "policy.json")
    frame = _load_frame(cfg)
    spec = cfg.split_for(frame)
    _, _, test_frame = md.split(frame, spec)
    env_cfg = cfg.env_config(frame.n_assets)
    warm_up = env_cfg.gate.lookback + 1 if env_cfg.gate.enabled else 0
    test_frame = _extended_slice(frame, test_frame, warm_up)
    policy = load_policy(policy_path)
    curve = run_backtest(policy, test_frame, env_cfg)
    try:
        seed = cfg.agent_config().rng_seed
    except ConfigError:
        seed = None
    report = compute_metrics(curve, policy.algorithm.upper(), seed=seed)
    os.makedirs(out, exist_ok=True)
    curve_path = os.path.join(out, "curve.csv")
    report_path = os.path.join(out, "report.json")
    write_curve_csv(curve, curve_path)
    write_report(report, report_path)
    _say(quiet, f"wrote {curve_path}")
    _say(quiet, f"wrote {report_path}")
    _say(quiet, f"final value {report.final_value:,.0f}, "
                f"sharpe {'n/a' if report.sharpe is None else f'{report.sharpe:.2f}'}")
    return report


def cmd_compare(cfg: RunConfig, report_paths: list, out_dir: str | None = None,
                quiet: bool = False, fmt: str = "text") -> str:
    reports = [load_report(p) for p in report_paths]
    frame = _load_frame(cfg)
    spec = cfg.split_for(frame)
    _, _, test_frame = md.split(frame, spec)
    env_cfg = cfg.env_config(frame.n_assets)
    for name, strat in cfg.baseline_configs():
        sliced = _extended_slice(frame, test_frame, strategy_warmup(strat))
        curve = run_strategy(sliced, strat, env_cfg.initial_capital, env_cfg.costs)
        reports.append(compute_metrics(curve, name))
    if not reports:
        raise ConfigError("compare", "no reports given and no baselines configured")
    corner = ""
    if reports[0].date_range:
        start, end = reports[0].date_range
        corner = f"{start.replace('-', '/')}-{end.replace('-', '/')}"
    table = compare(reports, corner)
    out = cfg.output_dir(out_dir)
    os.makedirs(out, exist_ok=True)
    formats = cfg.formats()
    if "text" in formats:
        atomic_write_text(os.path.join(out, "comparison.txt"), table.to_text())
    if "csv" in formats:
        atomic_write_text(os.path.join(out, "comparison.csv"), table.to_csv())
    if "json" in formats:
        from .backtest import report_to_dict
        atomic_write_text(os.path.join(out, "comparison.json"),
                          canonical_json([report_to_dict(r) for r in reports]))
    rendered = table.to_csv() if fmt == "csv" else table.to_text()
    _say(quiet, rendered.rstrip("\n"))
    return rendered


DEMO_DATA = {
    "single_stock": {"n_assets": 1, "n_days": 500},
    "multi_stock": {"n_assets": 30, "n_days": 500},
    "portfolio": {"n_assets": 30, "n_days": 500},
}

DEMO_AGENTS = {
    "single_stock": ("ppo",),
    "multi_stock": ("td3", "ddpg"),
    "portfolio": ("td3", "ddpg"),
}


def _demo_config_text(use_case: str, algorithm: str, frame, sub_dir: str,
                      data_path: str) -> str:
    ts = frame.timestamps
    t_end, v_end = ts[350], ts[425]
    end = ts[-1] + pd.Timedelta(days=1)
    lines = [
        f"data.csv = {data_path}",
        "data.granularity = daily",
        f"split.train_start = {ts[0].date()}",
        f"split.train_end = {t_end.date()}",
        f"split.val_end = {v_end.date()}",
        f"split.test_end = {end.date()}",
        "env.cost.per_share_rate = 0.001",
        f"output.dir = {sub_dir}",
        f"agent.algorithm = {algorithm}",
        "agent.hidden = 64,64",
        "agent.checkpoint_every = 500",
    ]
    if use_case == "single_stock":
        lines += [
            "env.task = single_stock",
            "env.k = 10",
            "env.capital = 100000",
            "agent.total_steps = 4000",
            "agent.rollout_steps = 256",
            "agent.actor_lr = 0.0003",
            "agent.critic_lr = 0.001",
            "agent.rng_seed = 11",
            "baseline.1.variant = buy_and_hold",
            "baseline.1.name = Buy-Hold",
        ]
    else:
        task = "multi_stock" if use_case == "multi_stock" else "portfolio"
        lines += [
            f"env.task = {task}",
            "env.capital = 1000000",
            "agent.total_steps = 2500",
            "agent.warmup_steps = 400",
            "agent.exploration_sigma = 0.2",
            f"agent.rng_seed = {15 if algorithm == 'td3' else 21}",
            "baseline.1.variant = min_variance",
            "baseline.1.estimation_window = 63",
            "baseline.1.name = Min-Variance",
            "baseline.2.variant = equal_weighted",
            "baseline.2.name = EW-Index",
        ]
        if task == "multi_stock":
            lines.append("env.k = 50")
    return "\n".join(lines) + "\n"


def cmd_demo(use_case: str, out_dir: str | None = None, seed: int | None = None,
             quiet: bool = False, fmt: str = "text") -> str:
    """Self-contained pipeline on bundled synthetic data.

    Generates the data, trains the use case's agents, backtests them on the
    held-out split, and renders the comparison table against baselines.
    """
    if use_case not in DEMO_DATA:
        raise ConfigError("demo", f"unknown use case {use_case!r}")
    out = out_dir or f"demo_{use_case}"
    os.makedirs(out, exist_ok=True)
    frame = synth.generate_synthetic_frame(seed=synth.DEFAULT_SEED, **DEMO_DATA[use_case])
    data_path = os.path.abspath(os.path.join(out, "data.csv"))
    md.write_canonical_csv(frame, data_path)

    report_paths = []
    sanity = {}
    first_cfg = None
    for algorithm in DEMO_AGENTS[use_case]:
        sub = algorithm
        cfg_path = os.path.join(out, f"{algorithm}.cfg")
        atomic_write_text(cfg_path,
                          _demo_config_text(use_case, algorithm, frame, sub, data_path))
        cfg = load_config(cfg_path)
        if first_cfg is None:
            first_cfg = cfg
        cmd_ingest(cfg, quiet=True)
        cmd_train(cfg, seed=seed, quiet=quiet)
        cmd_backtest(cfg, quiet=quiet)
        report_paths.append(os.path.join(out, sub, "report.json"))

        full = _load_frame(cfg)
        spec = cfg.split_for(full)
        train_frame, _, _ = md.split(full, spec)
        env_cfg = cfg.env_config(full.n_assets)
        train_env = env_cfg.build(train_frame)
        policy = load_policy(os.path.join(out, sub, "policy.json"))
        trained = dollar_sharpe(run_eval_episode(train_env, policy))
        randoms = sorted(
            dollar_sharpe(run_eval_episode(train_env, RandomPolicy(train_env, s)))
            for s in range(10))
        median = 0.5 * (randoms[4] + randoms[5])
        sanity[algorithm] = {"trained_train_sharpe": trained,
                             "random_median_sharpe": median}

    sanity_path = os.path.join(out, "sanity.json")
    atomic_write_text(sanity_path, canonical_json(sanity))
    # cfg.output_dir resolves relative overrides against the config's own
    # directory, which is already `out`; hand it an absolute path instead
    rendered = cmd_compare(first_cfg, report_paths, out_dir=os.path.abspath(out),
                           quiet=quiet, fmt=fmt)
    _say(quiet, f"wrote {sanity_path}")
    return rendered


# --- argument parsing -----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marketgym",
        description="Market MDP environments, DRL agents, and backtesting.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=int, help="override agent.rng_seed")
    common.add_argument("--out", help="override output.dir")
    common.add_argument("--format", choices=("text", "csv", "json"), default="text",
                        help="stdout rendering for tables")
    common.add_argument("--quiet", action="store_true", help="suppress stdout")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="normalize a bar CSV")
    sub.add_parser("train", parents=[common], help="train the configured agent")
    p_back = sub.add_parser("backtest", parents=[common], help="evaluate a policy")
    p_back.add_argument("--policy", help="policy file (default <out>/policy.json)")
    p_cmp = sub.add_parser("compare", parents=[common], help="render a metric table")
    p_cmp.add_argument("reports", nargs="*", help="MetricsReport JSON files")
    p_demo = sub.add_parser("demo", parents=[common], help="end-to-end use case")
    p_demo.add_argument("use_case", choices=sorted(DEMO_DATA))
    return parser


def _require_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("config", "--config is required for this command")
    return load_config(args.config)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "ingest":
            cmd_ingest(_require_config(args), args.out, args.quiet)
        elif args.command == "train":
            cmd_train(_require_config(args), args.seed, args.out, args.quiet)
        elif args.command == "backtest":
            cmd_backtest(_require_config(args), args.policy, args.out, args.quiet)
        elif args.command == "compare":
            cmd_compare(_require_config(args), args.reports, args.out, args.quiet,
                        args.format)
        else:
            cmd_demo(args.use_case, args.out, args.seed, args.quiet, args.format)
        return 0
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (LayoutMismatch, IncompatibleActionSpace, ShapeMismatch) as exc:
        print(f"error: layout mismatch: {exc}", file=sys.stderr)
        return 4
    except ReportSchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except (MarketGymError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
