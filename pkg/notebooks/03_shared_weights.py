# %% [markdown]
# # Weight-shared search on the toy image dataset
#
# Every sampled child trains one epoch against the shared store and is scored
# by validation accuracy. Afterwards the best architecture found is retrained
# from scratch at two widths.

# %%
import tempfile
from pathlib import Path

from archsearch.evaluators import make_toy_dataset
from archsearch.harness import RunConfig, retrain_best, run_search
from archsearch.harness.retrain import format_rows

data = make_toy_dataset()
print("train", data.train.images.shape, "valid", data.valid.images.shape)

# %%
out = Path(tempfile.mkdtemp(prefix="shared-"))
cfg = RunConfig(mode="ppo", evaluator="shared", num_layers=4, controller_epochs=10, stem_filters=4,
                record_wallclock=False)
result = run_search(cfg, out_dir=out)
for rec in result.records:
    print(f"epoch {rec.epoch:2d}  mean {rec.mean_reward:.3f}  best {rec.best_reward:.3f}  {rec.best_arch}")

# %% [markdown]
# Retraining uses fresh weights and reports accuracy on the held-out test split
# with running batchnorm statistics.

# %%
rows = retrain_best(checkpoint=result.checkpoint_path, filters=[8, 16], epochs=3)
print(format_rows(rows))
