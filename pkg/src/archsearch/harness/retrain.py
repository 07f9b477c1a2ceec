"""Retrain a chosen architecture from scratch and report held-out accuracy."""
from __future__ import annotations

from dataclasses import dataclass

from ..evaluators.data import ToyDataset, make_toy_dataset
from ..evaluators.optim import cosine_lr
from ..evaluators.shared import ChildTrainConfig, SharedParamStore, accuracy, init_shared, train_epoch
from ..evaluators.synthetic import SyntheticLandscape
from ..numerics import spawn_rngs
from ..search_space import Architecture, build_child_graph, parse
from .checkpoint import load_checkpoint
from .config import RunConfig


@dataclass
class RetrainRow:
    arch: str
    filters: int
    epochs: int
    seed: int
    train_loss: float
    valid_accuracy: float
    test_accuracy: float
    synthetic_score: float | None = None


def train_from_scratch(arch: Architecture, filters: int, epochs: int, seed: int, dataset: ToyDataset,
                       cfg: ChildTrainConfig | None = None) -> RetrainRow:
    """Fresh weights, ``epochs`` passes over the train split, test accuracy with running BN stats."""
    cfg = cfg or ChildTrainConfig()
    init_rng, train_rng = spawn_rngs(seed, 2)
    channels = dataset.train.images.shape[1]
    store = init_shared(SharedParamStore(arch.num_layers, filters, channels), init_rng)
    spec = build_child_graph(arch, filters)
    loss = float("nan")
    for _ in range(epochs):
        lr = cosine_lr(store.epochs_trained, cfg.t_0, cfg.t_mult, cfg.lr, cfg.eta_min)
        loss = train_epoch(store, spec, dataset.train, cfg, train_rng, lr)
        store.epochs_trained += 1
    return RetrainRow(
        arch=str(arch), filters=filters, epochs=epochs, seed=seed, train_loss=loss,
        valid_accuracy=accuracy(store, spec, dataset.valid, batch_stats=False),
        test_accuracy=accuracy(store, spec, dataset.test, batch_stats=False),
    )


def retrain_best(arch: str | None = None, checkpoint=None, filters: list[int] | int = 24, epochs: int = 10,
                 seed: int = 0, cfg: RunConfig | None = None) -> list[RetrainRow]:
    """One row per filter count, for either an explicit architecture or a checkpoint's best.

    With a synthetic-run checkpoint each row also carries the landscape score.
    """
    if (arch is None) == (checkpoint is None):
        raise ValueError("give exactly one of arch or checkpoint")
    landscape = None
    if checkpoint is not None:
        ckpt = load_checkpoint(checkpoint)
        cfg = RunConfig.from_dict(ckpt.header["config"])
        arch_obj = parse(ckpt.header["best_arch"])
        if "target" in ckpt.header:
            landscape = SyntheticLandscape(parse(ckpt.header["target"]), cfg.w_block, cfg.w_skip, 0.0)
    else:
        arch_obj = parse(arch)
    cfg = cfg or RunConfig()
    dataset = make_toy_dataset(cfg.data_seed, cfg.train_size, cfg.valid_size, cfg.test_size,
                               cfg.image_channels, cfg.image_size, cfg.data_noise)
    rows = []
    for f in [filters] if isinstance(filters, int) else filters:
        row = train_from_scratch(arch_obj, f, epochs, seed, dataset, cfg.child_config())
        if landscape is not None:
            row.synthetic_score = landscape.score(arch_obj)
        rows.append(row)
    return rows


def format_rows(rows: list[RetrainRow]) -> str:
    lines = [f"{'filters':>7} {'epochs':>6} {'valid':>7} {'test':>7} {'synthetic':>9}  arch"]
    for r in rows:
        syn = "-" if r.synthetic_score is None else f"{r.synthetic_score:.4f}"
        lines.append(f"{r.filters:>7} {r.epochs:>6} {r.valid_accuracy:>7.4f} {r.test_accuracy:>7.4f} {syn:>9}  {r.arch}")
    return "\n".join(lines)
