"""L-infinity perturbations: FGSM, an iterated signed-gradient attack, and random-sign noise.

Every function accepts a single input vector or a batch (one input per row).
Inputs are in normalized units; clamping is off unless ``AttackConfig.clamp``
is set, and assumes the clean input already lies inside the clamp range.
Clamp bounds are scalars or per-feature arrays (the valid pixel range after
per-feature normalization differs from pixel to pixel).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .network import NetworkSpec, input_gradient


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    steps: int = 1
    step_size: float | None = None
    clamp: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise DomainError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if self.steps < 1:
            raise DomainError("steps must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise DomainError("step_size must be positive")
        if self.clamp is not None and not np.all(np.asarray(self.clamp[0]) < np.asarray(self.clamp[1])):
            raise DomainError(f"clamp range must satisfy lo < hi, got {self.clamp}")
        if self.seed < 0:
            raise DomainError("seed must be unsigned")


def _clamp(x, cfg):
    if cfg.clamp is None:
        return x
    return np.clip(x, cfg.clamp[0], cfg.clamp[1])


def fgsm(net: NetworkSpec, x, y, cfg: AttackConfig) -> np.ndarray:
    """``x + epsilon * sign(grad_x loss)`` with ``sign(0) = 0``."""
    x = np.asarray(x, dtype=np.float64)
    g = input_gradient(net, x, y)
    return _clamp(x + cfg.epsilon * np.sign(g), cfg)


def iterated_attack(net: NetworkSpec, x, y, cfg: AttackConfig) -> np.ndarray:
    """Repeated signed-gradient steps, projected back onto the epsilon ball after each one."""
    x = np.asarray(x, dtype=np.float64)
    step = cfg.epsilon if cfg.step_size is None else cfg.step_size
    lo, hi = x - cfg.epsilon, x + cfg.epsilon
    adv = x.copy()
    for _ in range(cfg.steps):
        g = input_gradient(net, adv, y)
        adv = _clamp(np.clip(adv + step * np.sign(g), lo, hi), cfg)
    return adv


def random_sign_noise(x, cfg: AttackConfig) -> np.ndarray:
    """``x + epsilon * sigma`` with i.i.d. fair +/-1 signs drawn from ``cfg.seed``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2):
        raise ShapeError("random_sign_noise takes a vector or a batch of rows")
    rng = np.random.default_rng(cfg.seed)
    sigma = 2.0 * rng.integers(0, 2, size=x.shape) - 1.0
    return _clamp(x + cfg.epsilon * sigma, cfg)


ATTACKS = {"fgsm", "iter", "noise"}


def attack(kind: str, net: NetworkSpec, x, y, cfg: AttackConfig) -> np.ndarray:
    if kind == "fgsm":
        return fgsm(net, x, y, cfg)
    if kind == "iter":
        return iterated_attack(net, x, y, cfg)
    if kind == "noise":
        return random_sign_noise(x, cfg)
    raise DomainError(f"unknown attack kind {kind!r}; choose from {sorted(ATTACKS)}")
