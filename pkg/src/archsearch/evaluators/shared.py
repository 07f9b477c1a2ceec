"""Weight-shared child networks trained on the toy dataset.

Every (searched layer, block type) pair owns one slot of weights that is
reused by each sampled architecture choosing that block at that position.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .. import numerics as nx
from ..numerics import BatchNormStats, Var
from ..search_space import (
    NUM_BLOCKS, Architecture, BlockType, ChildGraphSpec, build_child_graph, filter_plan, reduction_points,
)
from .data import NUM_CLASSES, Split, ToyDataset
from .optim import cosine_lr, sgd_momentum_step

log = logging.getLogger(__name__)


@dataclass
class ChildTrainConfig:
    lr: float = 0.05
    momentum: float = 0.5
    weight_decay: float = 2e-4
    t_0: int = 10
    t_mult: int = 2
    eta_min: float = 0.001
    epochs: int = 1
    keep_prob: float = 0.8
    batch_size: int = 32
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if not self.lr > self.eta_min >= 0:
            raise ValueError("need lr > eta_min >= 0")


def layer_slot(layer: int, block: int) -> str:
    return f"layer{layer}.{BlockType(block).name.lower()}"


class SharedParamStore:
    """Shared child weights, their momentum buffers and batchnorm running stats."""

    def __init__(self, num_layers: int, stem_filters: int, in_channels: int = 1,
                 num_classes: int = NUM_CLASSES, bn_momentum: float = 0.1):
        self.num_layers = num_layers
        self.stem_filters = stem_filters
        self.in_channels = in_channels
        self.num_classes = num_classes
        self.filters = filter_plan(num_layers, stem_filters)
        self.params: dict[str, np.ndarray] = {}
        self.velocity: dict[str, np.ndarray] = {}
        self.bn: dict[str, BatchNormStats] = {}
        self.slots: dict[str, list[str]] = {}
        self.epochs_trained = 0  # drives the cosine schedule
        self._bn_momentum = bn_momentum
        self._layout()

    def _add(self, slot: str, name: str, shape, fan_in: int | None = None):
        key = f"{slot}/{name}"
        self.params[key] = np.zeros(shape)
        self.slots.setdefault(slot, []).append(key)
        if name.endswith("gamma"):
            self.params[key][...] = 1.0
        self._fan_in[key] = fan_in

    def _bn(self, slot: str, name: str, channels: int):
        self._add(slot, f"{name}.gamma", (channels,))
        self._add(slot, f"{name}.beta", (channels,))
        self.bn[f"{slot}/{name}"] = BatchNormStats(channels, self._bn_momentum)

    def _layout(self):
        self._fan_in: dict[str, int | None] = {}
        F, C = self.filters, self.in_channels
        self._add("stem", "kernel", (F[0], C, 3, 3), C * 9)
        self._bn("stem", "bn", F[0])
        for i in range(self.num_layers):
            in_width = F[i] + sum(F[:i])  # predecessor + every possible skip source
            for b in BlockType:
                slot = layer_slot(i, b)
                self._add(slot, "proj", (F[i], in_width, 1, 1), in_width)
                k = b.kernel
                if b in (BlockType.CONV3, BlockType.CONV5):
                    self._add(slot, "kernel", (F[i], F[i], k, k), F[i] * k * k)
                elif b in (BlockType.SEPCONV3, BlockType.SEPCONV5):
                    self._add(slot, "depth", (F[i], k, k), k * k)
                    self._add(slot, "point", (F[i], F[i], 1, 1), F[i])
                self._bn(slot, "bn", F[i])
        for r, p in enumerate(reduction_points(self.num_layers)):
            f = F[p - 1]
            self._add(f"reduce{r}", "kernel", (2 * f, f, 3, 3), f * 9)
            self._bn(f"reduce{r}", "bn", 2 * f)
        self._add("out_proj", "proj", (F[-1], sum(F), 1, 1), sum(F))
        self._add("head", "W", (self.num_classes, F[-1]), F[-1])
        self._add("head", "b", (self.num_classes,))

    def fixed_slots(self) -> list[str]:
        return [s for s in self.slots if not s.startswith("layer")]

    def slot_count(self) -> int:
        return len(self.slots)

    def init(self, rng: np.random.Generator) -> "SharedParamStore":
        return init_shared(self, rng)

    def snapshot(self, keys=None) -> dict[str, np.ndarray]:
        keys = self.params if keys is None else keys
        return {k: self.params[k].copy() for k in keys}


def init_shared(store: SharedParamStore, rng: np.random.Generator) -> SharedParamStore:
    """He-uniform weights (variance 2 / fan_in), gamma 1, beta 0, zero biases."""
    for key in store.params:
        fan_in = store._fan_in[key]
        if fan_in is None:
            store.params[key][...] = 1.0 if key.endswith("gamma") else 0.0
        else:
            bound = math.sqrt(6.0 / fan_in)
            store.params[key][...] = rng.uniform(-bound, bound, store.params[key].shape)
    store.velocity.clear()
    for stats in store.bn.values():
        stats.mean[...] = 0.0
        stats.var[...] = 1.0
    store.epochs_trained = 0
    return store


# ------------------------------------------------------------------ forward

def _proj_columns(store: SharedParamStore, layer: int, sources) -> list[tuple[int, int]]:
    F = store.filters
    offsets = {"pred": (0, F[layer])}
    start = F[layer]
    for j in range(layer):
        offsets[j] = (start, start + F[j])
        start += F[j]
    return [offsets[s] for s in sources]


def _project(x_parts: list[Var], weight: Var, cols: list[tuple[int, int]]) -> Var:
    x = x_parts[0] if len(x_parts) == 1 else nx.concat(x_parts, axis=1)
    if len(cols) == 1 and cols[0] == (0, weight.shape[1]):
        w = weight
    else:
        w = nx.concat([weight[:, a:b] for a, b in cols], axis=1)
    return nx.conv2d(x, w)


def child_forward(store: SharedParamStore, spec: ChildGraphSpec, x: np.ndarray, pv: dict[str, Var],
                  train: bool, rng: np.random.Generator | None = None, keep_prob: float = 1.0,
                  bn_batch_stats: bool | None = None, bn_eps: float = 1e-5,
                  update_stats: bool | None = None) -> Var:
    """Logits of the child described by ``spec`` with weights ``pv``.

    ``bn_batch_stats`` picks batch statistics (default: ``train``);
    running statistics are updated only when ``update_stats`` (default: ``train``).
    """
    use_batch = train if bn_batch_stats is None else bn_batch_stats
    update = train if update_stats is None else update_stats

    def bn(h, key):
        stats = store.bn[key]
        if use_batch:
            return nx.batchnorm(h, pv[f"{key}.gamma"], pv[f"{key}.beta"], bn_eps, True, stats if update else None)
        return nx.batchnorm(h, pv[f"{key}.gamma"], pv[f"{key}.beta"], bn_eps, False, stats)

    out: dict[int, Var] = {}
    red = 0
    for node in spec.nodes:
        ins = [out[i] for i in node.inputs]
        if node.kind == "stem":
            h = bn(nx.conv2d(Var(x), pv["stem/kernel"], 1, 1), "stem/bn")
        elif node.kind == "layer":
            slot = layer_slot(node.layer, node.block)
            h = _project(ins, pv[f"{slot}/proj"], _proj_columns(store, node.layer, node.sources))
            b = BlockType(node.block)
            pad = b.kernel // 2
            if b in (BlockType.CONV3, BlockType.CONV5):
                h = nx.conv2d(nx.relu(h), pv[f"{slot}/kernel"], 1, pad)
            elif b in (BlockType.SEPCONV3, BlockType.SEPCONV5):
                h = nx.depthwise_separable_conv(nx.relu(h), pv[f"{slot}/depth"], pv[f"{slot}/point"], 1, pad)
            else:
                h = nx.pool(h, "avg" if b == BlockType.AVGPOOL3 else "max", 3, 1, 1)
            h = bn(h, f"{slot}/bn")
        elif node.kind == "reduction":
            slot = f"reduce{red}"
            red += 1
            h = bn(nx.conv2d(nx.relu(ins[0]), pv[f"{slot}/kernel"], 2, 1), f"{slot}/bn")
        elif node.kind == "downsample":
            h = nx.pool(ins[0], "avg", 3, 2, 1)
        elif node.kind == "concat_project":
            F = store.filters
            starts = np.concatenate([[0], np.cumsum(F)])
            cols = [(int(starts[j]), int(starts[j + 1])) for j in node.sources]
            h = _project(ins, pv["out_proj/proj"], cols)
        elif node.kind == "gap":
            h = nx.global_avg_pool(ins[0])
            if train and keep_prob < 1.0:
                mask = (rng.random(h.shape) < keep_prob) / keep_prob
                h = h * mask
        elif node.kind == "dense":
            h = nx.dense(ins[0], pv["head/W"], pv["head/b"])
        else:
            raise ValueError(f"unknown node kind {node.kind!r}")
        out[node.id] = h
    return out[spec.output]


def used_keys(store: SharedParamStore, spec: ChildGraphSpec) -> list[str]:
    keys = list(store.slots["stem"]) + list(store.slots["head"])
    red = 0
    for node in spec.nodes:
        if node.kind == "layer":
            keys += store.slots[layer_slot(node.layer, node.block)]
        elif node.kind == "reduction":
            keys += store.slots[f"reduce{red}"]
            red += 1
        elif node.kind == "concat_project":
            keys += store.slots["out_proj"]
    return keys


def accuracy(store: SharedParamStore, spec: ChildGraphSpec, data: Split, batch_stats: bool = True,
             batch_size: int = 256) -> float:
    """Classification accuracy with dropout off.

    ``batch_stats`` normalises with each evaluation batch's statistics
    (running statistics are left untouched); otherwise running statistics are used.
    """
    with nx.no_grad():
        pv = {k: Var(v) for k, v in store.params.items()}
        correct = 0
        for s in range(0, len(data), batch_size):
            logits = child_forward(store, spec, data.images[s:s + batch_size], pv, train=False,
                                   bn_batch_stats=batch_stats, update_stats=False)
            correct += int((logits.value.argmax(axis=1) == data.labels[s:s + batch_size]).sum())
    return correct / len(data)


def train_epoch(store: SharedParamStore, spec: ChildGraphSpec, data: Split, cfg: ChildTrainConfig,
                rng: np.random.Generator, lr: float) -> float:
    """One pass over ``data`` in shuffled minibatches; returns the mean loss."""
    keys = used_keys(store, spec)
    order = rng.permutation(len(data))
    losses = []
    for s in range(0, len(data), cfg.batch_size):
        idx = order[s:s + cfg.batch_size]
        pv = {k: Var(store.params[k], requires_grad=True) for k in keys}
        logits = child_forward(store, spec, data.images[idx], pv, train=True, rng=rng,
                               keep_prob=cfg.keep_prob, bn_eps=cfg.bn_eps)
        loss = nx.cross_entropy(logits, data.labels[idx])
        if not math.isfinite(loss.item()):
            raise FloatingPointError("non-finite child loss")
        nx.backward(loss)
        grads = {k: pv[k].grad for k in keys}
        sgd_momentum_step(store.params, grads, store.velocity, lr, cfg.momentum, cfg.weight_decay)
        losses.append(loss.item())
    return float(np.mean(losses))


def shared_evaluate(store: SharedParamStore, arch: Architecture, dataset: ToyDataset,
                    cfg: ChildTrainConfig, rng: np.random.Generator) -> float:
    """Train ``arch``'s slice of the shared weights, then return validation accuracy."""
    spec = build_child_graph(arch, store.stem_filters)
    keys = used_keys(store, spec)
    saved = store.snapshot(keys)
    saved_vel = {k: store.velocity[k].copy() for k in keys if k in store.velocity}
    saved_bn = {k: (s.mean.copy(), s.var.copy()) for k, s in store.bn.items()}
    saved_epochs = store.epochs_trained
    try:
        for _ in range(cfg.epochs):
            lr = cosine_lr(store.epochs_trained, cfg.t_0, cfg.t_mult, cfg.lr, cfg.eta_min)
            train_epoch(store, spec, dataset.train, cfg, rng, lr)
            store.epochs_trained += 1
    except FloatingPointError:
        log.warning("non-finite loss while training %s; keeping pre-training weights", arch)
        for k, v in saved.items():
            store.params[k][...] = v
        for k in keys:
            if k in saved_vel:
                store.velocity[k][...] = saved_vel[k]
            else:
                store.velocity.pop(k, None)
        for k, (m, v) in saved_bn.items():
            store.bn[k].mean[...] = m
            store.bn[k].var[...] = v
        store.epochs_trained = saved_epochs
    return accuracy(store, spec, dataset.valid)


class SharedEvaluator:
    """Evaluator backed by one :class:`SharedParamStore` (sampling rule M = 1)."""

    def __init__(self, store: SharedParamStore, dataset: ToyDataset, cfg: ChildTrainConfig):
        self.store = store
        self.dataset = dataset
        self.cfg = cfg

    def evaluate(self, arch: Architecture, rng: np.random.Generator) -> float:
        return shared_evaluate(self.store, arch, self.dataset, self.cfg, rng)
