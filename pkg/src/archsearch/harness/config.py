"""Run configuration: one flat JSON document, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from ..controller import ControllerConfig
from ..evaluators.shared import ChildTrainConfig
from ..trainers import AdamState, RLConfig

MODES = ("random", "reinforce", "ppo")
EVALUATORS = ("synthetic", "shared")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "reinforce"
    evaluator: str = "synthetic"
    seed: int = 0
    num_layers: int = 10
    controller_epochs: int = 150
    children_per_epoch: int = 3
    out_dir: str = "runs/default"
    # controller
    lstm_hidden: int = 20
    lstm_layers: int = 2
    temperature: float = 5.0
    tanh_const: float = 2.5
    init_range: float = 0.1
    # controller optimiser
    adam_lr: float = 0.006
    adam_beta1: float = 0.0
    adam_beta2: float = 0.999
    adam_eps: float = 1e-3
    grad_clip: float = 5.0
    # policy gradient
    entropy_weight: float = 0.01
    eps_clip: float = 0.2
    ppo_epochs: int = 10
    ppo_granularity: str = "per_child"
    replay_recompute_states: bool = False
    # synthetic landscape
    w_block: float = 0.6
    w_skip: float = 0.4
    noise_sigma: float = 0.02
    # shared child training
    stem_filters: int = 24
    child_lr: float = 0.05
    child_momentum: float = 0.5
    child_weight_decay: float = 2e-4
    cosine_t0: int = 10
    cosine_t_mult: int = 2
    cosine_eta_min: float = 0.001
    child_epochs: int = 1
    keep_prob: float = 0.8
    child_batch_size: int = 32
    # toy dataset
    data_seed: int = 0
    train_size: int = 512
    valid_size: int = 256
    test_size: int = 256
    image_size: int = 16
    image_channels: int = 1
    data_noise: float = 0.35
    # bookkeeping
    record_wallclock: bool = True
    checkpoint_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.evaluator not in EVALUATORS:
            raise ConfigError(f"evaluator must be one of {EVALUATORS}, got {self.evaluator!r}")
        positive = ("num_layers", "controller_epochs", "children_per_epoch", "lstm_hidden", "lstm_layers",
                    "temperature", "adam_lr", "adam_eps", "eps_clip", "ppo_epochs", "stem_filters",
                    "child_lr", "cosine_t0", "cosine_t_mult", "keep_prob", "child_batch_size",
                    "train_size", "valid_size", "test_size", "image_size", "image_channels")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        nonneg = ("seed", "tanh_const", "init_range", "grad_clip", "entropy_weight", "noise_sigma",
                  "child_momentum", "child_weight_decay", "cosine_eta_min", "child_epochs",
                  "checkpoint_every", "data_seed", "data_noise", "adam_beta1", "adam_beta2")
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.keep_prob > 1:
            raise ConfigError("keep_prob must be <= 1")
        if self.ppo_granularity not in ("per_child", "per_epoch"):
            raise ConfigError(f"unknown ppo_granularity {self.ppo_granularity!r}")

    # -- sub-configs
    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(self.lstm_hidden, self.lstm_layers, self.temperature, self.tanh_const,
                                self.init_range)

    def rl_config(self) -> RLConfig:
        return RLConfig(entropy_weight=self.entropy_weight, eps_clip=self.eps_clip, k_epochs=self.ppo_epochs,
                        children_per_epoch=self.children_per_epoch, grad_clip=self.grad_clip,
                        ppo_granularity=self.ppo_granularity, recompute_states=self.replay_recompute_states)

    def adam_state(self) -> AdamState:
        return AdamState(lr=self.adam_lr, beta1=self.adam_beta1, beta2=self.adam_beta2, eps=self.adam_eps)

    def child_config(self) -> ChildTrainConfig:
        return ChildTrainConfig(lr=self.child_lr, momentum=self.child_momentum,
                                weight_decay=self.child_weight_decay, t_0=self.cosine_t0,
                                t_mult=self.cosine_t_mult, eta_min=self.cosine_eta_min,
                                epochs=self.child_epochs, keep_prob=self.keep_prob,
                                batch_size=self.child_batch_size)

    # -- (de)serialisation
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in data.items():
            default = known[key].default
            if isinstance(default, bool):
                ok = isinstance(value, bool)
            elif isinstance(default, int):
                ok = isinstance(value, int) and not isinstance(value, bool)
            elif isinstance(default, float):
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            else:
                ok = isinstance(value, str)
            if not ok:
                raise ConfigError(f"config key {key!r} has wrong type {type(value).__name__}")
        values = {k: (float(v) if isinstance(known[k].default, float) else v) for k, v in data.items()}
        return cls(**values)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return RunConfig.from_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
