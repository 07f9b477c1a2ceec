"""Child-network optimiser pieces: momentum SGD with L2 decay and SGDR schedule."""
from __future__ import annotations

import math

import numpy as np


def sgd_momentum_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                      velocity: dict[str, np.ndarray], lr: float, momentum: float = 0.5,
                      weight_decay: float = 2e-4) -> dict[str, np.ndarray]:
    """v <- momentum * v - lr * (g + wd * theta);  theta <- theta + v  (in place)."""
    for name, g in grads.items():
        theta = params[name]
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(theta)
        v *= momentum
        v -= lr * (g + weight_decay * theta)
        theta += v
    return params


def cosine_lr(t: int, t_0: int = 10, t_mult: int = 2, eta_max: float = 0.05,
              eta_min: float = 0.001) -> float:
    """Cosine annealing with warm restarts; periods t_0, t_0*t_mult, ..."""
    if t < 0:
        raise ValueError("t must be non-negative")
    period, t_cur = t_0, t
    while t_cur >= period:
        t_cur -= period
        period *= t_mult
    return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + math.cos(math.pi * t_cur / period))


def restart_period(t: int, t_0: int = 10, t_mult: int = 2) -> int:
    """Length of the schedule period containing step ``t``."""
    period, t_cur = t_0, t
    while t_cur >= period:
        t_cur -= period
        period *= t_mult
    return period
