from typing import Protocol

import numpy as np

from ..search_space import Architecture
from .data import ToyDataset, Split, make_toy_dataset, dump_dataset, load_dump
from .optim import sgd_momentum_step, cosine_lr
from .synthetic import SyntheticLandscape, synthetic_evaluate
from .shared import (
    ChildTrainConfig, SharedParamStore, SharedEvaluator, init_shared, shared_evaluate,
    child_forward, accuracy, train_epoch,
)


class Evaluator(Protocol):
    def evaluate(self, arch: Architecture, rng: np.random.Generator) -> float:
        """Reward in [0, 1] for ``arch``."""
