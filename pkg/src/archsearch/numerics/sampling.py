"""Seeded random streams and the two stochastic decisions the controller makes."""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Var


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; the draw sequence for a seed is platform independent."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def soften(logits, temperature: float, tanh_const: float) -> Var:
    """tanh_const * tanh(logits / temperature)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return ad.tanh(ad.as_var(logits) * (1.0 / temperature)) * tanh_const


def categorical_stats(logits, index: int, temperature: float, tanh_const: float) -> tuple[Var, Var, np.ndarray]:
    """Log-probability of ``index`` and the entropy of the softened distribution."""
    z = soften(logits, temperature, tanh_const)
    logp = ad.log_softmax(z)
    p = ad.exp(logp)
    entropy = -ad.vsum(p * logp)
    return logp[index], entropy, p.value


def categorical_sample(logits, temperature: float, tanh_const: float,
                       rng: np.random.Generator) -> tuple[int, float, float]:
    vals = ad.as_var(logits).value
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite logits")
    if vals.ndim != 1 or vals.size < 1:
        raise ValueError("logits must be a non-empty vector")
    with ad.no_grad():
        z = soften(vals, temperature, tanh_const)
        logp = ad.log_softmax(z).value
    p = np.exp(logp)
    u = rng.random()
    index = int(min(np.searchsorted(np.cumsum(p), u, side="right"), vals.size - 1))
    with ad.no_grad():
        lp, ent, _ = categorical_stats(vals, index, temperature, tanh_const)
    return index, lp.item(), ent.item()


def bernoulli_stats(logit, bit: int) -> tuple[Var, Var, float]:
    """Log-probability of ``bit`` under sigmoid(logit) and the binary entropy.

    Uses log-sigmoid identities so saturated logits stay finite.
    """
    logit = ad.as_var(logit)
    p = ad.sigmoid(logit)
    # log sigmoid(x) = -softplus(-x); log(1 - sigmoid(x)) = -softplus(x)
    log_p = -_softplus(-logit)
    log_q = -_softplus(logit)
    lp = log_p if bit else log_q
    entropy = -(p * log_p + (1.0 - p) * log_q)
    return lp, entropy, p.item()


def _softplus(x: Var) -> Var:
    # log(1 + e^x) = max(x, 0) + log(1 + e^-|x|)
    v = x.value
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    sig = 0.5 * (np.tanh(0.5 * v) + 1.0)
    return ad.make(out, (x,), lambda g: (g * sig,))


def bernoulli_sample(logit, rng: np.random.Generator) -> tuple[int, float, float]:
    v = float(ad.as_var(logit).value)
    if not math.isfinite(v):
        raise ValueError("non-finite logit")
    with ad.no_grad():
        p = ad.sigmoid(v).item()
    bit = int(rng.random() < p)
    with ad.no_grad():
        lp, ent, _ = bernoulli_stats(v, bit)
    return bit, lp.item(), ent.item()
