"""Macro search space: architectures, their string form, and child-graph wiring."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

import numpy as np


class BlockType(enum.IntEnum):
    CONV3 = 0
    CONV5 = 1
    SEPCONV3 = 2
    SEPCONV5 = 3
    AVGPOOL3 = 4
    MAXPOOL3 = 5

    @property
    def kernel(self) -> int:
        return 5 if self in (BlockType.CONV5, BlockType.SEPCONV5) else 3


NUM_BLOCKS = len(BlockType)


class ArchitectureError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    """Block ids per layer plus, for layer i >= 1, an i-bit skip vector.

    ``skips[i - 1][j] == 1`` means layer ``j`` feeds layer ``i``.
    """

    blocks: tuple[int, ...]
    skips: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(int(b) for b in self.blocks))
        object.__setattr__(self, "skips", tuple(tuple(int(s) for s in row) for row in self.skips))

    @property
    def num_layers(self) -> int:
        return len(self.blocks)

    def skip_sources(self, layer: int) -> list[int]:
        if layer == 0:
            return []
        return [j for j, bit in enumerate(self.skips[layer - 1]) if bit]

    def skip_bits(self) -> np.ndarray:
        """All skip bits flattened layer by layer."""
        return np.array([b for row in self.skips for b in row], dtype=np.int64)

    def __str__(self) -> str:
        return serialize(self)


def validate(arch: Architecture) -> str | None:
    """Return the first violated rule, or None when the architecture is well formed."""
    if len(arch.blocks) < 1:
        return "empty architecture"
    for b in arch.blocks:
        if not 0 <= b < NUM_BLOCKS:
            return "unknown block"
    if len(arch.skips) != len(arch.blocks) - 1:
        return "non-triangular skips"
    for i, row in enumerate(arch.skips, start=1):
        if len(row) != i:
            return "non-triangular skips"
        if any(bit not in (0, 1) for bit in row):
            return "skip bits must be 0/1"
    return None


def check(arch: Architecture) -> Architecture:
    err = validate(arch)
    if err:
        raise ArchitectureError(err)
    return arch


def search_space_size(num_layers: int) -> int:
    if num_layers < 1:
        raise ValueError("need at least one layer")
    return NUM_BLOCKS ** num_layers * 2 ** (num_layers * (num_layers - 1) // 2)


def serialize(arch: Architecture) -> str:
    check(arch)
    parts = []
    for i, b in enumerate(arch.blocks):
        src = arch.skip_sources(i)
        parts.append(f"b{b}" + ("<" + ",".join(map(str, src)) if src else ""))
    return ";".join(parts)


_LAYER_RE = re.compile(r"^b(\d+)(?:<(\d+(?:,\d+)*))?$")


def parse(text: str) -> Architecture:
    blocks, skips = [], []
    for i, part in enumerate(text.strip().split(";")):
        m = _LAYER_RE.match(part)
        if not m:
            raise ArchitectureError(f"malformed layer {part!r}")
        b = int(m.group(1))
        if b >= NUM_BLOCKS:
            raise ArchitectureError(f"unknown block b{b}")
        blocks.append(b)
        sources = [int(s) for s in m.group(2).split(",")] if m.group(2) else []
        if len(set(sources)) != len(sources):
            raise ArchitectureError(f"duplicate skip source in layer {i}")
        if any(s >= i for s in sources):
            raise ArchitectureError(f"layer {i} cannot take input from layer >= {i}")
        if i > 0:
            row = [0] * i
            for s in sources:
                row[s] = 1
            skips.append(tuple(row))
    return Architecture(tuple(blocks), tuple(skips))


def random_architecture(num_layers: int, rng: np.random.Generator) -> Architecture:
    blocks = tuple(int(b) for b in rng.integers(0, NUM_BLOCKS, num_layers))
    skips = tuple(tuple(int(x) for x in rng.integers(0, 2, i)) for i in range(1, num_layers))
    return Architecture(blocks, skips)


# ----------------------------------------------------------------- child graph

def reduction_points(num_layers: int) -> list[int]:
    """1-based searched-layer indices followed by a stride-2 reduction."""
    return [p for p in (num_layers // 3, 2 * num_layers // 3) if p >= 1]


def filter_plan(num_layers: int, stem_filters: int) -> list[int]:
    """Output filters of each searched layer (doubling after every reduction)."""
    points = reduction_points(num_layers)
    return [stem_filters * 2 ** sum(1 for p in points if p < i) for i in range(1, num_layers + 1)]


def scale_plan(num_layers: int) -> list[int]:
    """Number of reduction boundaries passed before each searched layer."""
    points = reduction_points(num_layers)
    return [sum(1 for p in points if p < i) for i in range(1, num_layers + 1)]


@dataclass
class ChildNode:
    id: int
    kind: str  # stem | layer | reduction | downsample | concat_project | gap | dense
    inputs: list[int]
    filters: int
    stride: int = 1
    scale: int = 0
    layer: int | None = None
    block: int | None = None
    # layer nodes: which input came from which source ("pred" or a layer index)
    sources: list = field(default_factory=list)


@dataclass
class ChildGraphSpec:
    nodes: list[ChildNode]
    num_layers: int
    stem_filters: int
    layer_nodes: list[int]

    def kinds(self) -> list[str]:
        return [n.kind for n in self.nodes]

    @property
    def output(self) -> int:
        return self.nodes[-1].id


def build_child_graph(arch: Architecture, stem_filters: int) -> ChildGraphSpec:
    """Compile an architecture into an ordered (topological) node list."""
    check(arch)
    if stem_filters < 1:
        raise ValueError("stem_filters must be positive")
    L = arch.num_layers
    filters = filter_plan(L, stem_filters)
    scales = scale_plan(L)
    points = set(reduction_points(L))
    nodes: list[ChildNode] = []

    def add(**kw) -> int:
        nodes.append(ChildNode(id=len(nodes), **kw))
        return nodes[-1].id

    stem = add(kind="stem", inputs=[], filters=stem_filters)
    raw: list[int] = []  # output node of each searched layer before any reduction
    down_cache: dict[tuple[int, int], int] = {}

    def at_scale(layer: int, scale: int) -> int:
        """Node carrying layer ``layer``'s output, average-pooled down to ``scale``."""
        node, s = raw[layer], scales[layer]
        while s < scale:
            key = (layer, s + 1)
            if key not in down_cache:
                down_cache[key] = add(kind="downsample", inputs=[node], filters=filters[layer],
                                      stride=2, scale=s + 1)
            node, s = down_cache[key], s + 1
        return node

    pred = stem
    layer_nodes = []
    consumed: set[int] = set()
    for i in range(L):
        inputs, sources = [pred], ["pred"]
        for j in arch.skip_sources(i):
            src = at_scale(j, scales[i])
            if src == pred:
                continue
            inputs.append(src)
            sources.append(j)
            consumed.add(j)
        if i > 0:
            consumed.add(i - 1)
        nid = add(kind="layer", inputs=inputs, filters=filters[i], scale=scales[i],
                  layer=i, block=arch.blocks[i], sources=sources)
        raw.append(nid)
        layer_nodes.append(nid)
        pred = nid
        if (i + 1) in points:
            pred = add(kind="reduction", inputs=[nid], filters=filters[i] * 2, stride=2,
                       scale=scales[i] + 1)

    final_scale = scales[-1]
    dangling = [i for i in range(L) if i not in consumed]
    if len(dangling) > 1:
        ins = [at_scale(i, final_scale) for i in dangling]
        head_in = add(kind="concat_project", inputs=ins, filters=filters[-1], scale=final_scale,
                      sources=dangling)
    else:
        head_in = raw[dangling[0]]
    gap = add(kind="gap", inputs=[head_in], filters=filters[-1], scale=final_scale)
    add(kind="dense", inputs=[gap], filters=0, scale=final_scale)
    return ChildGraphSpec(nodes=nodes, num_layers=L, stem_filters=stem_filters, layer_nodes=layer_nodes)
