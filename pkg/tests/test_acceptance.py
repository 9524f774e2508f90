"""End-to-end acceptance suite.

Each test prints one ACCEPTANCE line with its verdict so a plain pytest run
doubles as a checklist.  Tolerances and time budgets are asserted inline.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from marketgym import market_data as md
from marketgym.agents.common import AgentConfig, act
from marketgym.agents.ddpg import train_ddpg
from marketgym.agents.dqn import train_dqn
from marketgym.agents.nets import (
    flatten_params,
    forward_batch,
    gaussian_log_prob,
    gradient_check,
    init_mlp,
    mlp_forward,
    set_flat_params,
    softmax,
)
from marketgym.agents.ppo import ppo_policy_gradient, train_ppo
from marketgym.agents.td3 import train_td3
from marketgym.backtest import MetricsReport, compare, max_drawdown, sharpe_ratio
from marketgym.backtest import EquityCurve, annualized_std
from marketgym.baselines import mean_variance_weights, min_variance_weights
from marketgym.cli import cmd_demo, main
from marketgym.execution import CostModel
from marketgym.trading_env import (
    TurbulenceGate,
    compute_turbulence,
    regularized_covariance,
)

from conftest import (
    ChainEnv,
    QuadraticBanditEnv,
    TwoArmEnv,
    chain_optimal_q,
    frame_from_closes,
    random_walk_closes,
)
from test_agents import bandit_config, chain_config, learned_chain_q, two_arm_config
from test_baselines import simplex_grid
from test_trading_env import NO_GATE, run_accounting_episode, simple_env
from test_turbulence import oracle as turbulence_oracle

GOLDEN = Path(__file__).parent / "golden"


def verdict(capsys, number, label, ok):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number} {label}: {'PASS' if ok else 'FAIL'}")


def test_acceptance_1_accounting_identity(capsys):
    ok = False
    try:
        rng = np.random.default_rng(20200923)
        start = time.perf_counter()
        for _ in range(1000):
            n = int(rng.integers(1, 5))
            T = int(rng.integers(30, 60))
            closes = random_walk_closes(rng, n, T)
            if n == 1:
                task, variant = ("single_stock",
                                 "discrete" if rng.random() < 0.5 else "continuous")
            elif rng.random() < 0.5:
                task, variant = "multi_stock", "continuous"
            else:
                task, variant = "portfolio", "simplex"
            costs = CostModel(
                flat_fee=float(rng.uniform(0, 2)),
                per_share_rate=float(rng.uniform(0, 0.02)),
                half_spread=float(rng.uniform(0, 0.3)),
            )
            if rng.random() < 0.4:
                gate = TurbulenceGate(enabled=True,
                                      lookback=int(rng.integers(n + 2, n + 8)),
                                      threshold=float(rng.choice([0.5, 100.0])))
            else:
                gate = NO_GATE
            env = simple_env(closes, variant=variant, task=task,
                             capital=float(rng.uniform(500, 50_000)),
                             costs=costs, gate=gate)
            run_accounting_episode(rng, env, atol=1e-9)
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"{elapsed:.1f}s"
        ok = True
    finally:
        verdict(capsys, 1, "accounting identity, 1000 random episodes", ok)


def test_acceptance_2_turbulence_oracle(capsys):
    ok = False
    try:
        rng = np.random.default_rng(99)
        for _ in range(100):
            n = int(rng.integers(1, 11))
            rows = int(rng.integers(n + 2, n + 40))
            history = rng.normal(0.0, 0.02, size=(rows, n))
            current = rng.normal(0.0, 0.05, size=n)
            got = compute_turbulence(history, current)
            want = turbulence_oracle(history, current)
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9)
        history = rng.normal(0.0, 0.02, size=(12, 4))
        assert compute_turbulence(history, history.mean(axis=0)) == 0.0
        ok = True
    finally:
        verdict(capsys, 2, "turbulence oracle, 100 fixtures", ok)


def test_acceptance_3_metric_oracles(capsys):
    ok = False
    try:
        import pandas as pd

        rng = np.random.default_rng(7)
        for _ in range(200):
            T = int(rng.integers(3, 2001))
            values = random_walk_closes(rng, 1, T)[:, 0] * float(rng.uniform(1, 1e4))
            ts = pd.date_range("2019-01-01", periods=T, freq="D", tz="UTC")
            curve = EquityCurve(ts, values)

            # every (peak i, trough j >= i) pair, brutish but independent
            ratio = (values[:, None] - values[None, :]) / values[:, None]
            assert max_drawdown(curve) == ratio[np.triu_indices(T)].max()

            r = values[1:] / values[:-1] - 1.0
            mean = r.sum() / len(r)
            var = ((r - mean) ** 2).sum() / (len(r) - 1)
            assert annualized_std(curve) == pytest.approx(
                math.sqrt(var * 252.0), rel=1e-12)
            assert sharpe_ratio(curve) == pytest.approx(
                mean / math.sqrt(var) * math.sqrt(252.0), rel=1e-12)

        hand = EquityCurve(pd.date_range("2019-01-01", periods=3, freq="D", tz="UTC"),
                           np.array([100.0, 50.0, 75.0]))
        assert max_drawdown(hand) == 0.5
        ok = True
    finally:
        verdict(capsys, 3, "curve metric oracles, 200 curves", ok)


def fd_probe(objective, net, rng, n_probes=10, eps=1e-6):
    """Worst relative error of analytic-vs-central-difference over params."""
    analytic = objective(None)
    flat = flatten_params(net)
    worst = 0.0
    for j in rng.choice(flat.size, size=min(n_probes, flat.size), replace=False):
        theta = flat[j]
        flat[j] = theta + eps
        set_flat_params(net, flat)
        hi = objective("value")
        flat[j] = theta - eps
        set_flat_params(net, flat)
        lo = objective("value")
        flat[j] = theta
        set_flat_params(net, flat)
        num = (hi - lo) / (2 * eps)
        denom = max(abs(analytic[j]), abs(num), 1e-5)
        worst = max(worst, abs(analytic[j] - num) / denom)
    return worst


def test_acceptance_4_gradient_checks(capsys):
    ok = False
    try:
        rng = np.random.default_rng(31)

        def random_shape(out_dim=None):
            in_dim = int(rng.integers(2, 9))
            layers = [int(rng.integers(4, 17)) for _ in range(int(rng.integers(1, 3)))]
            out = out_dim if out_dim is not None else int(rng.integers(1, 7))
            return (in_dim, *layers, out)

        for _ in range(20):   # Q head: relu hidden, linear output
            net = init_mlp(random_shape(), rng, "relu", self_test=False)
            assert gradient_check(net, rng) < 1e-4
        for _ in range(20):   # deterministic actor: tanh squashed
            net = init_mlp(random_shape(), rng, "tanh", "tanh", self_test=False)
            assert gradient_check(net, rng) < 1e-4
        for _ in range(20):   # value head: scalar output
            net = init_mlp(random_shape(out_dim=1), rng, "relu", self_test=False)
            assert gradient_check(net, rng) < 1e-4

        for _ in range(20):   # categorical scores
            shape = random_shape(out_dim=int(rng.integers(2, 7)))
            net = init_mlp(shape, rng, "tanh", self_test=False)
            obs = rng.standard_normal((5, shape[0]))
            actions = rng.integers(0, shape[-1], size=5)
            adv = rng.standard_normal(5)

            def objective(mode, net=net, obs=obs, actions=actions, adv=adv):
                if mode is None:
                    return ppo_policy_gradient(net, obs, actions, adv, "discrete")[0]
                out, _ = forward_batch(net, obs)
                lp = np.log(softmax(out))[np.arange(len(adv)), actions]
                return float(np.mean(lp * adv))

            assert fd_probe(objective, net, rng) < 1e-4

        for _ in range(20):   # gaussian mean head (plus log-std direction)
            dim = int(rng.integers(1, 4))
            shape = random_shape(out_dim=dim)
            net = init_mlp(shape, rng, "tanh", self_test=False)
            log_std = rng.uniform(-0.5, 0.3, size=dim)
            obs = rng.standard_normal((5, shape[0]))
            actions = rng.standard_normal((5, dim))
            adv = rng.standard_normal(5)

            def objective(mode, net=net, obs=obs, actions=actions, adv=adv,
                          log_std=log_std):
                if mode is None:
                    return ppo_policy_gradient(net, obs, actions, adv, "box",
                                               log_std)[0]
                out, _ = forward_batch(net, obs)
                return float(np.mean(gaussian_log_prob(out, log_std, actions) * adv))

            assert fd_probe(objective, net, rng) < 1e-4

            analytic = ppo_policy_gradient(net, obs, actions, adv, "box", log_std)[1]
            eps = 1e-6
            for c in range(dim):
                ds = np.zeros(dim)
                ds[c] = eps
                out, _ = forward_batch(net, obs)
                hi = float(np.mean(gaussian_log_prob(out, log_std + ds, actions) * adv))
                lo = float(np.mean(gaussian_log_prob(out, log_std - ds, actions) * adv))
                num = (hi - lo) / (2 * eps)
                denom = max(abs(analytic[c]), abs(num), 1e-5)
                assert abs(analytic[c] - num) / denom < 1e-4
        ok = True
    finally:
        verdict(capsys, 4, "gradient checks, 5 heads x 20 nets", ok)


def test_acceptance_5_agent_convergence(capsys):
    ok = False
    try:
        budget = 60.0

        start = time.perf_counter()
        policy = train_dqn(ChainEnv(), chain_config(seed=0))
        q_err = np.abs(learned_chain_q(policy) - chain_optimal_q(0.9)).max()
        assert q_err < 1e-2, f"max |Q - Q*| = {q_err:.4f}"
        assert time.perf_counter() - start < budget

        start = time.perf_counter()
        ddpg = train_ddpg(QuadraticBanditEnv(), bandit_config("ddpg", seed=0))
        a = float(act(ddpg, np.zeros(1))[0])
        assert abs(a - 0.3) < 0.05, f"ddpg action {a:.4f}"
        assert time.perf_counter() - start < budget

        start = time.perf_counter()
        td3 = train_td3(QuadraticBanditEnv(), bandit_config("td3", seed=0))
        a = float(act(td3, np.zeros(1))[0])
        assert abs(a - 0.3) < 0.05, f"td3 action {a:.4f}"
        assert time.perf_counter() - start < budget

        start = time.perf_counter()
        ppo = train_ppo(TwoArmEnv(seed=100), two_arm_config(seed=0))
        logits = mlp_forward(ppo.nets["pi"], np.zeros(1))
        p_better = softmax(logits[None, :])[0, 1]
        assert p_better > 0.95, f"P(better arm) = {p_better:.4f}"
        assert time.perf_counter() - start < budget
        ok = True
    finally:
        verdict(capsys, 5, "agent convergence on closed-form tasks", ok)


def test_acceptance_6_baseline_optimality(capsys):
    ok = False
    try:
        rng = np.random.default_rng(11)
        for _ in range(30):
            rets = rng.normal(0.0, 0.02, size=(30, 2)) @ rng.normal(0, 1, (2, 2))
            cov, _ = regularized_covariance(rets, None)
            w1 = (cov[1, 1] - cov[0, 1]) / (cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1])
            want = np.clip([w1, 1.0 - w1], 0.0, 1.0)
            np.testing.assert_allclose(min_variance_weights(rets), want, atol=1e-6)

        grid = simplex_grid(3, 40)
        for _ in range(10):
            rets = rng.normal(0.001, 0.02, size=(40, 3)) @ rng.normal(0, 1, (3, 3))
            cov, _ = regularized_covariance(rets, None)
            mu = rets.mean(axis=0)
            lam = float(rng.uniform(0.5, 4.0))
            w = mean_variance_weights(rets, lam)
            got = float(lam * (w @ cov @ w) - mu @ w)
            best = min(float(lam * (g @ cov @ g) - mu @ g) for g in grid)
            assert got <= best + 1e-6

        for _ in range(10):
            rets = rng.normal(0.001, 0.02, size=(40, 4))
            np.testing.assert_allclose(mean_variance_weights(rets, 1e8),
                                       min_variance_weights(rets), atol=1e-3)
        ok = True
    finally:
        verdict(capsys, 6, "baseline optimality vs closed form and grid", ok)


def test_acceptance_7_demos(capsys, tmp_path, monkeypatch):
    ok = False
    try:
        monkeypatch.chdir(tmp_path)
        row_labels = ("Initial value", "Final value", "Annualized return",
                      "Annualized Std", "Sharpe ratio", "Max drawdown")
        for use_case in ("single_stock", "multi_stock", "portfolio"):
            start = time.perf_counter()
            cmd_demo(use_case, quiet=True)
            elapsed = time.perf_counter() - start
            assert elapsed < 300.0, f"{use_case}: {elapsed:.0f}s"

            out = tmp_path / f"demo_{use_case}"
            table = (out / "comparison.txt").read_text().splitlines()
            assert len(table) == 8    # corner row, rule, six metric rows
            assert "/" in table[0] and "-" in table[0]
            assert set(table[1]) == {"-"}
            for line, label in zip(table[2:], row_labels):
                assert line.startswith(label)
            n_cols = len(table[0].split()) - 1
            assert n_cols >= 2

            sanity = json.loads((out / "sanity.json").read_text())
            assert sanity
            for algorithm, bars in sanity.items():
                assert bars["trained_train_sharpe"] >= bars["random_median_sharpe"], \
                    f"{use_case}/{algorithm}: {bars}"
        ok = True
    finally:
        verdict(capsys, 7, "end-to-end demos under 5 minutes with sanity bar", ok)


DETERMINISM_CONFIG = """
data.csv = data.csv
split.train_start = 2020-01-01
split.train_end = 2020-02-20
split.val_end = 2020-03-06
split.test_end = 2020-03-21
env.task = single_stock
agent.algorithm = dqn
agent.hidden = 16
agent.batch_size = 32
agent.warmup_steps = 40
agent.total_steps = 200
agent.checkpoint_every = 50
agent.rng_seed = 5
output.dir = out
"""


def test_acceptance_8_determinism(capsys, tmp_path):
    ok = False
    try:
        rng = np.random.default_rng(6)
        frame = frame_from_closes(random_walk_closes(rng, 1, 80), indicators="none")
        md.write_canonical_csv(frame, tmp_path / "data.csv")
        cfg = tmp_path / "run.cfg"
        cfg.write_text(DETERMINISM_CONFIG)
        for sub in ("a", "b"):
            out = str(tmp_path / sub)
            assert main(["train", "--config", str(cfg), "--quiet", "--out", out]) == 0
            assert main(["backtest", "--config", str(cfg), "--quiet", "--out", out]) == 0
        for name in ("policy.json", "training_log.csv", "checkpoints.csv",
                     "curve.csv", "report.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes(), name
        ok = True
    finally:
        verdict(capsys, 8, "byte-identical artifacts across reruns", ok)


FIXTURE_CORNER = "2019/01/01-2020/09/23"

FIXTURE_TABLE_1 = [
    ("SPY", 127044.0, 0.1489, 0.0963, 1.49, 0.2093),
    ("QQQ", 163647.0, 0.3233, 0.2751, 1.16, 0.2826),
    ("GOOGL", 174825.0, 0.3740, 0.3341, 1.12, 0.2776),
    ("AMZN", 192031.0, 0.4494, 0.2962, 1.40, 0.2113),
    ("AAPL", 173063.0, 0.3688, 0.2584, 1.35, 0.2247),
    ("MSFT", 172797.0, 0.3649, 0.3341, 1.10, 0.2811),
    ("S&P 500", 133402.0, 0.1781, 0.2700, 0.74, 0.3392),
]

FIXTURE_TABLE_2 = [
    ("TD3", 1403337.0, 0.2140, 0.1460, 1.38, 0.1152),
    ("DDPG", 1396607.0, 0.2034, 0.1589, 1.28, 0.1372),
    ("Min-Var.", 1171120.0, 0.0838, 0.2621, 0.44, 0.3434),
    ("DJIA", 1185260.0, 0.1061, 0.2863, 0.48, 0.3701),
]


def fixture_reports(rows, initial):
    return [MetricsReport(name, initial, final, ret, std, sharpe, dd)
            for name, final, ret, std, sharpe, dd in rows]


def test_acceptance_9_golden_report_tables(capsys):
    ok = False
    try:
        one = compare(fixture_reports(FIXTURE_TABLE_1, 100000.0), FIXTURE_CORNER)
        two = compare(fixture_reports(FIXTURE_TABLE_2, 1000000.0), FIXTURE_CORNER)
        assert one.to_text() == (GOLDEN / "table1.txt").read_text()
        assert two.to_text() == (GOLDEN / "table2.txt").read_text()
        for fragment in ("127,044", "14.89%", "9.63%", "1.49", "20.93%"):
            assert fragment in one.to_text()
        for fragment in ("1,403,337", "21.40%", "1.38", "0.44", "37.01%"):
            assert fragment in two.to_text()
        ok = True
    finally:
        verdict(capsys, 9, "golden comparison tables", ok)
