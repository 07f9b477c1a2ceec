"""Controller optimisation: REINFORCE with a moving-average baseline, PPO, Adam."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import numerics as nx
from .controller import ControllerParams, Trajectory, replay_logprobs, replay_values
from .numerics import Var


class NonFiniteObjective(FloatingPointError):
    pass


@dataclass
class RLConfig:
    entropy_weight: float = 0.01
    eps_clip: float = 0.2
    k_epochs: int = 10
    gamma: float = 1.0
    children_per_epoch: int = 3
    grad_clip: float = 5.0
    ppo_granularity: str = "per_child"  # or "per_epoch"
    recompute_states: bool = False

    def __post_init__(self):
        if self.eps_clip <= 0:
            raise ValueError("eps_clip must be positive")
        if self.k_epochs < 1:
            raise ValueError("k_epochs must be >= 1")
        if self.gamma != 1.0:
            raise ValueError("only the undiscounted terminal-reward setting (gamma=1) is supported")
        if self.ppo_granularity not in ("per_child", "per_epoch"):
            raise ValueError(f"unknown ppo_granularity {self.ppo_granularity!r}")


class Baseline:
    """Mean of the last ``capacity`` controller-epoch mean rewards."""

    def __init__(self, capacity: int = 5, values: Sequence[float] = ()):
        self.window: deque[float] = deque(values, maxlen=capacity)

    @property
    def capacity(self) -> int:
        return self.window.maxlen

    @property
    def value(self) -> float | None:
        if not self.window:
            return None
        return sum(self.window) / len(self.window)

    def push(self, epoch_mean_reward: float) -> "Baseline":
        self.window.append(float(epoch_mean_reward))
        return self


def advantage(reward: float, baseline: Baseline) -> float:
    """reward - baseline; zero while the baseline window is still empty."""
    b = baseline.value
    return 0.0 if b is None else reward - b


# ------------------------------------------------------------------------ Adam

@dataclass
class AdamState:
    lr: float = 0.006
    beta1: float = 0.0
    beta2: float = 0.999
    eps: float = 1e-3
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              maximize: bool = True) -> dict[str, np.ndarray]:
    """In-place bias-corrected Adam step.

    ``maximize=True`` ascends the objective (controller training); with
    ``maximize=False`` it is the usual descent step.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    sign = 1.0 if maximize else -1.0
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        params[name] += sign * state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def objective_and_grads(params: ControllerParams,
                        build: Callable[[dict[str, Var]], Var]) -> tuple[float, dict[str, np.ndarray]]:
    pv = params.as_vars()
    obj = build(pv)
    value = obj.item()
    if not math.isfinite(value):
        raise NonFiniteObjective(f"objective is {value}")
    nx.backward(obj)
    # parameters the objective never touched (e.g. attention when L = 1) get zero gradient
    return value, {k: v.grad if v.grad is not None else np.zeros_like(v.value) for k, v in pv.items()}


def _sum(vars_: Sequence[Var]) -> Var:
    acc = vars_[0]
    for v in vars_[1:]:
        acc = acc + v
    return acc


# ------------------------------------------------------------------ REINFORCE

def reinforce_objective(pv: dict[str, Var], trajectories: Sequence[Trajectory],
                        advantages: Sequence[float], cfg: RLConfig, ctrl_cfg) -> Var:
    """sum_k A_k * sum_t log pi(a_t) + entropy_weight * sum of entropies."""
    terms = []
    for traj, adv in zip(trajectories, advantages):
        lps, ents = replay_logprobs(pv, traj, ctrl_cfg, cfg.recompute_states)
        terms.append(_sum(lps) * adv + _sum(ents) * cfg.entropy_weight)
    return _sum(terms)


def reinforce_update(params: ControllerParams, trajectories: Sequence[Trajectory],
                     rewards: Sequence[float], baseline: Baseline, cfg: RLConfig,
                     adam: AdamState, advantages: Sequence[float] | None = None) -> float:
    if not trajectories:
        raise ValueError("need at least one trajectory")
    if advantages is None:
        advantages = [advantage(r, baseline) for r in rewards]
    value, grads = objective_and_grads(
        params, lambda pv: reinforce_objective(pv, trajectories, advantages, cfg, params.cfg))
    clip_grad_norm(grads, cfg.grad_clip)
    adam_step(params.arrays, grads, adam, maximize=True)
    return value


# ------------------------------------------------------------------------ PPO

def clipped_surrogate(ratio: float, adv: float, eps_clip: float) -> float:
    clipped = min(max(ratio, 1.0 - eps_clip), 1.0 + eps_clip)
    return min(ratio * adv, clipped * adv)


def clipped_surrogate_var(ratio: Var, adv: float, eps_clip: float) -> Var:
    unclipped = ratio * adv
    clipped = nx.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv
    return nx.minimum(unclipped, clipped)


@dataclass
class MemoryEntry:
    trajectory: Trajectory
    old_logprobs: np.ndarray
    reward: float
    advantage: float


class PPOMemory:
    """Trajectories of one controller epoch with their sampling-time log-probs."""

    def __init__(self):
        self.entries: list[MemoryEntry] = []

    def clear(self) -> None:
        self.entries.clear()

    def add(self, traj: Trajectory, reward: float, adv: float) -> MemoryEntry:
        lp = traj.logprobs()
        lp.setflags(write=False)
        entry = MemoryEntry(traj, lp, float(reward), float(adv))
        self.entries.append(entry)
        return entry

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def ppo_objective(pv: dict[str, Var], entries: Sequence[MemoryEntry], old_logprobs: Sequence[np.ndarray],
                  cfg: RLConfig, ctrl_cfg) -> Var:
    """Per-action clipped surrogate summed over all actions, plus the entropy bonus."""
    terms = []
    for entry, lp_old in zip(entries, old_logprobs):
        lps, ents = replay_logprobs(pv, entry.trajectory, ctrl_cfg, cfg.recompute_states)
        for lp_new, lo in zip(lps, lp_old):
            ratio = nx.exp(lp_new - lo)
            terms.append(clipped_surrogate_var(ratio, entry.advantage, cfg.eps_clip))
        terms.append(_sum(ents) * cfg.entropy_weight)
    return _sum(terms)


def ppo_update(old: ControllerParams, new: ControllerParams, memory: PPOMemory | Sequence[MemoryEntry],
               cfg: RLConfig, adam: AdamState) -> float:
    """K passes of surrogate ascent on ``new``, then copy ``new`` into ``old``.

    Old log-probabilities are re-evaluated under ``old`` (equal to the stored
    sampling values while ``old`` is unchanged).  Returns the objective of the
    first pass.
    """
    entries = list(memory)
    if not entries:
        raise ValueError("PPO memory is empty")
    old_lps = [replay_values(old, e.trajectory, cfg.recompute_states)[0] for e in entries]
    first = None
    for _ in range(cfg.k_epochs):
        value, grads = objective_and_grads(new, lambda pv: ppo_objective(pv, entries, old_lps, cfg, new.cfg))
        if first is None:
            first = value
        clip_grad_norm(grads, cfg.grad_clip)
        adam_step(new.arrays, grads, adam, maximize=True)
    old.load_from(new)
    return first
