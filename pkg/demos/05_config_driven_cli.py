"""
The same pipeline from the command line
=======================================

Everything the previous demos did in Python is also scriptable through
one config file and four subcommands: ingest, train, backtest, compare.
This script writes a config, shells out to the CLI exactly as a user
would, and shows the artifacts each stage leaves behind.  A one-command
version of the whole thing is `marketgym demo single_stock`.
"""

import os
import subprocess
import sys
import tempfile

from marketgym.market_data import write_canonical_csv
from marketgym.synth import generate_synthetic_frame

workdir = tempfile.mkdtemp()
frame = generate_synthetic_frame(n_assets=1, n_days=120, seed=42)
write_canonical_csv(frame, os.path.join(workdir, "data.csv"))

# The config format is flat `key = value` lines.  Splits are calendar
# dates (half-open ranges); agent and env settings mirror the dataclass
# fields; baseline.N.* adds comparison columns.
ts = frame.timestamps
config = f"""
data.csv = data.csv
split.train_start = {ts[0].date()}
split.train_end = {ts[80].date()}
split.val_end = {ts[100].date()}
split.test_end = {(ts[-1] + (ts[-1] - ts[-2])).date()}

env.task = single_stock
env.k = 10
env.capital = 100000
env.cost.per_share_rate = 0.001

agent.algorithm = dqn
agent.hidden = 32
agent.batch_size = 32
agent.warmup_steps = 50
agent.total_steps = 400
agent.checkpoint_every = 100
agent.rng_seed = 5

baseline.1.variant = buy_and_hold
baseline.1.name = Buy-Hold

output.dir = out
"""
with open(os.path.join(workdir, "run.cfg"), "w") as fh:
    fh.write(config)


def cli(*args):
    """Run a marketgym subcommand and echo its stdout."""
    proc = subprocess.run(
        [sys.executable, "-m", "marketgym", *args, "--config", "run.cfg"],
        cwd=workdir, capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(proc.stderr)
    print("$ marketgym " + " ".join(args))
    print(proc.stdout)


# ingest validates the CSV and writes the normalized frame back out;
# train fits the configured agent and saves the best checkpoint;
# backtest replays the policy on the held-out split; compare renders
# the policy against the configured baselines.
cli("ingest")
cli("train")
cli("backtest")
cli("compare", os.path.join(workdir, "out", "report.json"))

print("artifacts under out/:")
for name in sorted(os.listdir(os.path.join(workdir, "out"))):
    print("  ", name)
