# %% [markdown]
# # Random vs REINFORCE vs PPO on the synthetic landscape
#
# The synthetic evaluator scores an architecture by how many blocks and skip
# bits it shares with a hidden target, plus a little noise. It is cheap enough
# to run several seeds of all three modes in a couple of minutes.

# %%
import statistics
import tempfile
from pathlib import Path

from archsearch.harness import RunConfig, report, run_search, summarize_log

SEEDS = range(3)
EPOCHS = 150
out = Path(tempfile.mkdtemp(prefix="synthetic-"))

logs = []
for mode in ("random", "reinforce", "ppo"):
    for seed in SEEDS:
        cfg = RunConfig(mode=mode, num_layers=4, controller_epochs=EPOCHS, seed=seed, record_wallclock=False)
        logs.append(run_search(cfg, out_dir=out / f"{mode}-{seed}").log_path)

# %% [markdown]
# At 150 epochs none of these runs gets its mean reward to 0.9, so the table
# uses a lower threshold to make the epochs-to-threshold column informative.

# %%
print(report(logs, tau=0.55, csv_path=out / "curves.csv"))
print("curves written to", out / "curves.csv")

# %% [markdown]
# Smoothed mean-reward curves, ten-epoch windows, median across seeds.

# %%
runs = [summarize_log(p) for p in logs]
for mode in ("random", "reinforce", "ppo"):
    curves = [r.curve for r in runs if r.mode == mode]
    windows = [statistics.median(statistics.fmean(c[i:i + 10]) for c in curves) for i in range(0, EPOCHS, 10)]
    print(f"{mode:9s}", " ".join(f"{w:.2f}" for w in windows))
