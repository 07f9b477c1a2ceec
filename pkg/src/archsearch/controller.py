"""LSTM policy that emits a macro architecture one decision at a time.

Per searched layer the controller

1. runs the stacked LSTM on the current input and samples a block type from
   the classifier head,
2. feeds that block's embedding through the LSTM again,
3. stores the resulting top hidden state as the layer's anchor,
4. for every earlier anchor samples a skip bit from an attention logit,
5. uses the mean of the selected anchors as the next input (the block
   embedding when nothing was selected).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import Var
from .search_space import NUM_BLOCKS, Architecture

GATES = ("forget", "input", "output", "cell")
START_TOKEN = NUM_BLOCKS


@dataclass
class ControllerConfig:
    hidden: int = 20
    lstm_layers: int = 2
    temperature: float = 5.0
    tanh_const: float = 2.5
    init_range: float = 0.1


class ControllerParams:
    """Named float64 arrays for every trainable controller tensor."""

    def __init__(self, arrays: dict[str, np.ndarray], cfg: ControllerConfig):
        self.arrays = arrays
        self.cfg = cfg

    @classmethod
    def init(cls, cfg: ControllerConfig, rng: np.random.Generator) -> "ControllerParams":
        r = cfg.init_range
        arrays = {name: rng.uniform(-r, r, size=shape) for name, shape in cls.shapes(cfg).items()}
        return cls(arrays, cfg)

    @staticmethod
    def shapes(cfg: ControllerConfig) -> dict[str, tuple[int, ...]]:
        H = cfg.hidden
        shapes: dict[str, tuple[int, ...]] = {}
        for layer in range(cfg.lstm_layers):
            for gate in GATES:
                shapes[f"lstm{layer}.U_{gate}"] = (H, H)
                shapes[f"lstm{layer}.W_{gate}"] = (H, H)
                shapes[f"lstm{layer}.b_{gate}"] = (H,)
        shapes["embedding"] = (NUM_BLOCKS + 1, H)
        shapes["head.W"] = (NUM_BLOCKS, H)
        shapes["head.b"] = (NUM_BLOCKS,)
        shapes["attn.v"] = (H,)
        shapes["attn.W_prev"] = (H, H)
        shapes["attn.W_curr"] = (H, H)
        return shapes

    @staticmethod
    def expected_count(hidden: int = 20, layers: int = 2, blocks: int = NUM_BLOCKS) -> int:
        lstm = layers * 4 * (2 * hidden * hidden + hidden)
        return lstm + (blocks + 1) * hidden + blocks * hidden + blocks + hidden + 2 * hidden * hidden

    def count(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def names(self) -> list[str]:
        return list(self.arrays)

    def copy(self) -> "ControllerParams":
        return ControllerParams({k: v.copy() for k, v in self.arrays.items()}, self.cfg)

    def load_from(self, other: "ControllerParams") -> None:
        for k, v in other.arrays.items():
            self.arrays[k][...] = v

    def zero_heads(self) -> None:
        """Zero the block head and attention vector: every decision becomes uniform."""
        for k in ("head.W", "head.b", "attn.v"):
            self.arrays[k][...] = 0.0

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for k in sorted(self.arrays):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.arrays[k]).tobytes())
        return h.hexdigest()

    def as_vars(self, requires_grad: bool = True) -> dict[str, Var]:
        return {k: Var(v, requires_grad=requires_grad, name=k) for k, v in self.arrays.items()}


# ------------------------------------------------------------------ primitives

def lstm_cell_step(x, h_prev, c_prev, p: dict, layer: int = 0) -> tuple[Var, Var]:
    """One LSTM step with sigmoid gates and a sigmoid state-input unit."""
    def pre(gate):
        return (p[f"lstm{layer}.b_{gate}"] + p[f"lstm{layer}.U_{gate}"] @ x
                + p[f"lstm{layer}.W_{gate}"] @ h_prev)

    f = nx.sigmoid(pre("forget"))
    g = nx.sigmoid(pre("input"))
    c = f * c_prev + g * nx.sigmoid(pre("cell"))
    q = nx.sigmoid(pre("output"))
    return nx.tanh(c) * q, c


def skip_logit(h_j, h_i, p: dict) -> Var:
    return nx.dot(p["attn.v"], nx.tanh(p["attn.W_prev"] @ h_j + p["attn.W_curr"] @ h_i))


def _stack_step(x, state: list[tuple], p: dict) -> tuple[Var, list[tuple]]:
    new = []
    inp = x
    for layer, (h, c) in enumerate(state):
        h, c = lstm_cell_step(inp, h, c, p, layer)
        new.append((h, c))
        inp = h
    return inp, new


def _state_array(state) -> np.ndarray:
    return np.array([[nx.as_var(h).value, nx.as_var(c).value] for h, c in state])


def _state_vars(arr: np.ndarray) -> list[tuple]:
    return [(Var(a[0]), Var(a[1])) for a in arr]


# ------------------------------------------------------------------ trajectory

@dataclass
class LayerRecord:
    block: int
    block_logprob: float
    block_entropy: float
    entering: np.ndarray  # lstm_layers x 2 x H, (h, c) before the block decision
    input_id: int | None  # embedding fed before the block decision, or None
    input_vec: np.ndarray | None  # constant mean-of-anchors input otherwise
    skips: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    skip_logprobs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    skip_entropies: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class Trajectory:
    layers: list[LayerRecord]
    anchors: np.ndarray  # L x H

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def logprobs(self) -> np.ndarray:
        """Per-action log-probabilities: each layer's block, then its skip bits."""
        return np.concatenate([np.concatenate([[r.block_logprob], r.skip_logprobs]) for r in self.layers])

    def entropies(self) -> np.ndarray:
        return np.concatenate([np.concatenate([[r.block_entropy], r.skip_entropies]) for r in self.layers])

    def total_logprob(self) -> float:
        return float(self.logprobs().sum())

    def num_actions(self) -> int:
        return sum(1 + len(r.skips) for r in self.layers)

    def architecture(self) -> Architecture:
        return Architecture(tuple(r.block for r in self.layers),
                            tuple(tuple(int(b) for b in r.skips) for r in self.layers[1:]))


def sample_architecture(params: ControllerParams, num_layers: int,
                        rng: np.random.Generator) -> tuple[Architecture, Trajectory]:
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    cfg = params.cfg
    T, K = cfg.temperature, cfg.tanh_const
    H = cfg.hidden
    with nx.no_grad():
        p = params.as_vars(requires_grad=False)
        state = [(Var(np.zeros(H)), Var(np.zeros(H))) for _ in range(cfg.lstm_layers)]
        input_id: int | None = START_TOKEN
        input_vec: np.ndarray | None = None
        anchors: list[Var] = []
        records = []
        for i in range(num_layers):
            entering = _state_array(state)
            x = p["embedding"][input_id] if input_vec is None else Var(input_vec)
            top, state = _stack_step(x, state, p)
            logits = p["head.W"] @ top + p["head.b"]
            block, blp, bent = nx.categorical_sample(logits, T, K, rng)
            top, state = _stack_step(p["embedding"][block], state, p)
            anchors.append(top)
            rec = LayerRecord(block, blp, bent, entering, input_id,
                              None if input_vec is None else input_vec.copy())
            if i > 0:
                bits, lps, ents = [], [], []
                for j in range(i):
                    logit = nx.soften(skip_logit(anchors[j], top, p), T, K)
                    bit, lp, ent = nx.bernoulli_sample(logit, rng)
                    bits.append(bit)
                    lps.append(lp)
                    ents.append(ent)
                rec.skips = np.array(bits, dtype=np.int64)
                rec.skip_logprobs = np.array(lps)
                rec.skip_entropies = np.array(ents)
            records.append(rec)
            chosen = [anchors[j] for j in range(i) if rec.skips[j]] if i > 0 else []
            if chosen:
                acc = chosen[0]
                for a in chosen[1:]:
                    acc = acc + a
                input_id, input_vec = None, (acc * (1.0 / len(chosen))).value
            else:
                input_id, input_vec = block, None
        traj = Trajectory(records, np.array([a.value for a in anchors]))
    return traj.architecture(), traj


def replay_logprobs(p: dict[str, Var], traj: Trajectory, cfg: ControllerConfig,
                    recompute_states: bool = False) -> tuple[list[Var], list[Var]]:
    """Log-probabilities and entropies of the stored actions under ``p``.

    By default each decision is re-evaluated from the hidden states and
    anchors saved at sampling time, so only the decision's own computation
    depends on ``p``.  With ``recompute_states`` the whole recurrence is
    rerun under ``p`` with the stored actions forced.
    """
    T, K = cfg.temperature, cfg.tanh_const
    H = cfg.hidden
    if traj.anchors.shape[1:] != (H,) or traj.layers[0].entering.shape != (cfg.lstm_layers, 2, H):
        raise ValueError("trajectory does not match controller dimensions")
    logprobs: list[Var] = []
    entropies: list[Var] = []
    if not recompute_states:
        anchors = [Var(a) for a in traj.anchors]
        for i, rec in enumerate(traj.layers):
            x = p["embedding"][rec.input_id] if rec.input_vec is None else Var(rec.input_vec)
            top, _ = _stack_step(x, _state_vars(rec.entering), p)
            lp, ent, _ = nx.categorical_stats(p["head.W"] @ top + p["head.b"], rec.block, T, K)
            logprobs.append(lp)
            entropies.append(ent)
            for j in range(i):
                logit = nx.soften(skip_logit(anchors[j], anchors[i], p), T, K)
                lp, ent, _ = nx.bernoulli_stats(logit, int(rec.skips[j]))
                logprobs.append(lp)
                entropies.append(ent)
        return logprobs, entropies

    state = [(Var(np.zeros(H)), Var(np.zeros(H))) for _ in range(cfg.lstm_layers)]
    x = p["embedding"][START_TOKEN]
    anchors = []
    for i, rec in enumerate(traj.layers):
        top, state = _stack_step(x, state, p)
        lp, ent, _ = nx.categorical_stats(p["head.W"] @ top + p["head.b"], rec.block, T, K)
        logprobs.append(lp)
        entropies.append(ent)
        top, state = _stack_step(p["embedding"][rec.block], state, p)
        anchors.append(top)
        for j in range(i):
            logit = nx.soften(skip_logit(anchors[j], top, p), T, K)
            lp, ent, _ = nx.bernoulli_stats(logit, int(rec.skips[j]))
            logprobs.append(lp)
            entropies.append(ent)
        chosen = [anchors[j] for j in range(i) if rec.skips[j]] if i > 0 else []
        if chosen:
            acc = chosen[0]
            for a in chosen[1:]:
                acc = acc + a
            x = acc * (1.0 / len(chosen))
        else:
            x = p["embedding"][rec.block]
    return logprobs, entropies


def replay_values(params: ControllerParams, traj: Trajectory,
                  recompute_states: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Plain-array version of :func:`replay_logprobs` (no graph)."""
    with nx.no_grad():
        lps, ents = replay_logprobs(params.as_vars(False), traj, params.cfg, recompute_states)
    return np.array([v.item() for v in lps]), np.array([v.item() for v in ents])
