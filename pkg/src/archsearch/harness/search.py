"""Search loop shared by the random, REINFORCE and PPO modes."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..controller import ControllerParams, Trajectory, sample_architecture
from ..evaluators.data import make_toy_dataset
from ..evaluators.shared import SharedEvaluator, SharedParamStore, init_shared
from ..evaluators.synthetic import SyntheticLandscape
from ..numerics import spawn_rngs
from ..search_space import Architecture, parse, serialize
from .. import numerics as nx
from ..trainers import Baseline, PPOMemory, advantage, ppo_update, reinforce_objective, reinforce_update
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig

log = logging.getLogger(__name__)

LOG_NAME = "search_log.jsonl"
CKPT_NAME = "checkpoint.ckpt"
STREAMS = ("init", "sample", "eval")


@dataclass
class EpochLogRecord:
    epoch: int
    mode: str
    seed: int
    mean_reward: float
    best_reward: float
    best_arch: str
    baseline: float | None
    objective: float | None
    mean_entropy: float
    seconds: float | None
    rewards: list[float]
    archs: list[str]

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


class SearchState:
    """Everything a run needs to continue bit-exactly from where it stopped."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.rngs = dict(zip(STREAMS, spawn_rngs(cfg.seed, len(STREAMS))))
        init = self.rngs["init"]
        self.controller = ControllerParams.init(cfg.controller_config(), init)
        self.old_controller = self.controller.copy()
        self.adam = cfg.adam_state()
        self.baseline = Baseline(5)
        self.epoch = 0
        self.children = 0
        self.best_reward = -1.0
        self.best_arch = ""
        self.landscape: SyntheticLandscape | None = None
        self.store: SharedParamStore | None = None
        if cfg.evaluator == "synthetic":
            self.landscape = SyntheticLandscape.from_seed(cfg.num_layers, init, w_block=cfg.w_block,
                                                          w_skip=cfg.w_skip, noise_sigma=cfg.noise_sigma)
            self.evaluator = self.landscape
        else:
            dataset = make_toy_dataset(cfg.data_seed, cfg.train_size, cfg.valid_size, cfg.test_size,
                                       cfg.image_channels, cfg.image_size, cfg.data_noise)
            self.store = init_shared(SharedParamStore(cfg.num_layers, cfg.stem_filters, cfg.image_channels),
                                     init)
            self.evaluator = SharedEvaluator(self.store, dataset, cfg.child_config())

    # ------------------------------------------------------------- persistence
    def to_checkpoint(self) -> Checkpoint:
        arrays: dict[str, np.ndarray] = {}
        for k, v in self.controller.arrays.items():
            arrays[f"controller/{k}"] = v
        for k, v in self.old_controller.arrays.items():
            arrays[f"controller_old/{k}"] = v
        for k, v in self.adam.m.items():
            arrays[f"adam_m/{k}"] = v
        for k, v in self.adam.v.items():
            arrays[f"adam_v/{k}"] = v
        header = {
            "config": self.cfg.to_dict(),
            "epoch": self.epoch,
            "children": self.children,
            "best_reward": self.best_reward,
            "best_arch": self.best_arch,
            "baseline_window": list(self.baseline.window),
            "adam_step": self.adam.step,
            "rng": {k: g.bit_generator.state for k, g in self.rngs.items()},
        }
        if self.landscape is not None:
            header["target"] = serialize(self.landscape.target)
        if self.store is not None:
            header["store_epochs_trained"] = self.store.epochs_trained
            for k, v in self.store.params.items():
                arrays[f"store/{k}"] = v
            for k, v in self.store.velocity.items():
                arrays[f"velocity/{k}"] = v
            for k, s in self.store.bn.items():
                arrays[f"bn_mean/{k}"] = s.mean
                arrays[f"bn_var/{k}"] = s.var
        return Checkpoint(header, arrays)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "SearchState":
        h = ckpt.header
        state = cls(RunConfig.from_dict(h["config"]))
        state.epoch = h["epoch"]
        state.children = h["children"]
        state.best_reward = h["best_reward"]
        state.best_arch = h["best_arch"]
        state.baseline = Baseline(5, h["baseline_window"])
        state.adam.step = h["adam_step"]
        for k, st in h["rng"].items():
            state.rngs[k].bit_generator.state = st
        if state.landscape is not None and h.get("target") != serialize(state.landscape.target):
            raise ValueError("checkpoint target does not match the seed-derived landscape")
        for name, arr in ckpt.arrays.items():
            group, key = name.split("/", 1)
            if group == "controller":
                state.controller.arrays[key][...] = arr
            elif group == "controller_old":
                state.old_controller.arrays[key][...] = arr
            elif group == "adam_m":
                state.adam.m[key] = arr.copy()
            elif group == "adam_v":
                state.adam.v[key] = arr.copy()
            elif group == "store":
                state.store.params[key][...] = arr
            elif group == "velocity":
                state.store.velocity[key] = arr.copy()
            elif group == "bn_mean":
                state.store.bn[key].mean[...] = arr
            elif group == "bn_var":
                state.store.bn[key].var[...] = arr
        if state.store is not None:
            state.store.epochs_trained = h["store_epochs_trained"]
        return state

    # ------------------------------------------------------------------ epoch
    def run_epoch(self) -> EpochLogRecord:
        cfg = self.cfg
        rl = cfg.rl_config()
        t0 = time.perf_counter()
        self.epoch += 1
        sampler = self.old_controller if cfg.mode == "ppo" else self.controller
        samples: list[tuple[Architecture, Trajectory]] = [
            sample_architecture(sampler, cfg.num_layers, self.rngs["sample"]) for _ in range(cfg.children_per_epoch)
        ]
        rewards = []
        for arch, _ in samples:
            r = float(self.evaluator.evaluate(arch, self.rngs["eval"]))
            rewards.append(r)
            self.children += 1
            if r > self.best_reward:
                self.best_reward, self.best_arch = r, serialize(arch)
        trajs = [t for _, t in samples]
        # advantages use the previous epochs only; epoch 1 has an empty window and advantage 0
        baseline_value = self.baseline.value
        advs = [advantage(r, self.baseline) for r in rewards]

        if cfg.mode == "reinforce":
            objective = reinforce_update(self.controller, trajs, rewards, self.baseline, rl, self.adam, advs)
        elif cfg.mode == "ppo":
            memory = PPOMemory()
            for traj, r, a in zip(trajs, rewards, advs):
                memory.add(traj, r, a)
            if rl.ppo_granularity == "per_child":
                values = [ppo_update(self.old_controller, self.controller, [e], rl, self.adam) for e in memory]
                objective = float(sum(values))
            else:
                objective = ppo_update(self.old_controller, self.controller, memory, rl, self.adam)
        else:
            with nx.no_grad():
                objective = reinforce_objective(self.controller.as_vars(False), trajs, advs, rl,
                                                self.controller.cfg).item()

        self.baseline.push(float(np.mean(rewards)))
        entropies = np.concatenate([t.entropies() for t in trajs])
        return EpochLogRecord(
            epoch=self.epoch, mode=cfg.mode, seed=cfg.seed,
            mean_reward=float(np.mean(rewards)), best_reward=self.best_reward, best_arch=self.best_arch,
            baseline=baseline_value, objective=float(objective), mean_entropy=float(entropies.mean()),
            seconds=round(time.perf_counter() - t0, 6) if cfg.record_wallclock else None,
            rewards=rewards, archs=[serialize(a) for a, _ in samples],
        )


@dataclass
class SearchResult:
    log_path: Path
    checkpoint_path: Path
    records: list[EpochLogRecord]
    state: SearchState


def run_search(cfg: RunConfig, resume: str | Path | None = None, out_dir: str | Path | None = None,
               stop_after: int | None = None) -> SearchResult:
    """Run (or resume) a search, appending one JSON line per controller epoch.

    ``stop_after`` ends the run early after that many total epochs, leaving a
    checkpoint that can be resumed.
    """
    if resume is not None:
        state = SearchState.from_checkpoint(load_checkpoint(resume))
        cfg = state.cfg
    else:
        state = SearchState(cfg)
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path, ckpt_path = out / LOG_NAME, out / CKPT_NAME
    if resume is None and log_path.exists():
        log_path.unlink()
    last = cfg.controller_epochs if stop_after is None else min(stop_after, cfg.controller_epochs)
    records = []
    with log_path.open("a") as fh:
        while state.epoch < last:
            last_good = state.to_checkpoint()  # an aborted epoch must not leak into the checkpoint
            try:
                rec = state.run_epoch()
            except FloatingPointError:
                save_checkpoint(last_good, ckpt_path)
                raise
            fh.write(rec.to_json() + "\n")
            fh.flush()
            records.append(rec)
            log.info("epoch %d mode=%s mean=%.4f best=%.4f", rec.epoch, rec.mode, rec.mean_reward, rec.best_reward)
            if cfg.checkpoint_every and state.epoch % cfg.checkpoint_every == 0:
                save_checkpoint(state.to_checkpoint(), ckpt_path)
    save_checkpoint(state.to_checkpoint(), ckpt_path)
    return SearchResult(log_path, ckpt_path, records, state)


def read_log(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def best_architecture(ckpt: Checkpoint) -> Architecture:
    return parse(ckpt.header["best_arch"])
