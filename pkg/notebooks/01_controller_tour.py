# %% [markdown]
# # Controller tour
#
# Sample a few macro architectures from a freshly initialised controller, look
# at the per-decision probabilities it assigns, and check how big the space is.

# %%
import numpy as np

from archsearch import numerics as nx
from archsearch.controller import ControllerConfig, ControllerParams, sample_architecture
from archsearch.search_space import BlockType, build_child_graph, search_space_size

params = ControllerParams.init(ControllerConfig(), nx.make_rng(0))
print("controller parameters:", params.count())

# %% [markdown]
# Architecture strings list one block per layer; `<i,j>` names the earlier
# layers feeding in through skip connections.

# %%
rng = nx.make_rng(1)
for _ in range(5):
    arch, traj = sample_architecture(params, 6, rng)
    print(f"{str(arch):45s} log p = {traj.total_logprob():8.3f}")

# %% [markdown]
# With the small initial weights every block is close to 1/6 and every skip bit
# close to 1/2, so the whole trajectory's entropy sits near its maximum.

# %%
arch, traj = sample_architecture(params, 6, nx.make_rng(2))
print("block probabilities of the sampled blocks:", np.round(np.exp([r.block_logprob for r in traj.layers]), 3))
n_skips = traj.num_actions() - traj.num_layers
ceiling = (traj.num_layers * np.log(6) + n_skips * np.log(2)) / traj.num_actions()
print(f"mean entropy per action {traj.entropies().mean():.3f}, uniform ceiling {ceiling:.3f}")

# %%
for L in (4, 6, 10, 12):
    print(f"L={L:2d}  {search_space_size(L):.3e} architectures")

# %% [markdown]
# The child graph makes the filter plan and the fixed reduction layers explicit.

# %%
spec = build_child_graph(arch, 24)
for node in spec.nodes:
    label = BlockType(node.block).name if node.block is not None else node.kind
    print(f"{node.id:3d} {label:10s} filters={node.filters!s:5s} inputs={node.inputs}")
