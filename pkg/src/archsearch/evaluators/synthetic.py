"""Cheap reward landscape: similarity to a hidden target architecture."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..search_space import Architecture, random_architecture


@dataclass
class SyntheticLandscape:
    target: Architecture
    w_block: float = 0.6
    w_skip: float = 0.4
    noise_sigma: float = 0.02

    @classmethod
    def from_seed(cls, num_layers: int, rng: np.random.Generator, **kw) -> "SyntheticLandscape":
        return cls(random_architecture(num_layers, rng), **kw)

    def score(self, arch: Architecture) -> float:
        """Noise-free reward."""
        L = self.target.num_layers
        if arch.num_layers != L:
            raise ValueError(f"architecture has {arch.num_layers} layers, landscape expects {L}")
        block_match = sum(a == b for a, b in zip(arch.blocks, self.target.blocks)) / L
        if L == 1:
            skip_match = 1.0
        else:
            wrong = int(np.sum(arch.skip_bits() != self.target.skip_bits()))
            skip_match = 1.0 - wrong / (L * (L - 1) / 2)
        return self.w_block * block_match + self.w_skip * skip_match

    def evaluate(self, arch: Architecture, rng: np.random.Generator) -> float:
        r = self.score(arch)
        if self.noise_sigma > 0:
            r += rng.normal(0.0, self.noise_sigma)
        return float(min(max(r, 0.0), 1.0))


def synthetic_evaluate(land: SyntheticLandscape, arch: Architecture, rng: np.random.Generator) -> float:
    return land.evaluate(arch, rng)
