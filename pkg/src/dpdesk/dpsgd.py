"""Differentially private SGD: lot sampling, per-example clipping, noisy
aggregation, descent — plus the plain-SGD path used as the non-private
(epsilon = infinity) baseline.

Clipping is one global L2 norm over all trainable parameters, and the norm
covers trainable groups only (frozen parameters carry no gradient). The
nominal lot size L = round(q * N) is the divisor of the noisy sum even when
a Poisson-sampled lot differs in size. Per-example gradients inside a lot
are reduced in ascending example-index order, so runs are deterministic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .grads import per_example_grads
from .models import (FreezeMask, Model, TrainStrategy, apply_strategy,
                     flatten_trainable, unflatten_trainable)
from .rng import Rng, gaussian

LR_RANGE = (1e-5, 0.1)  # searched learning-rate range


class ConfigurationError(ValueError):
    """A privacy/optimizer configuration violates its contract."""


@dataclass(frozen=True)
class PrivacyParams:
    epsilon_target: float  # math.inf for the non-private baseline
    delta: float
    clip_c: float
    noise_multiplier: float
    lot_size: int
    sampling_rate: float
    steps: int

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ConfigurationError(f"delta must be in (0,1), got {self.delta}")
        if self.clip_c <= 0:
            raise ConfigurationError("clip threshold must be positive")
        if self.lot_size <= 0 or self.steps <= 0:
            raise ConfigurationError("lot_size and steps must be positive")
        if not (0.0 < self.sampling_rate <= 1.0):
            raise ConfigurationError("sampling rate must be in (0,1]")
        if self.noise_multiplier < 0:
            raise ConfigurationError("noise multiplier must be non-negative")
        if math.isinf(self.epsilon_target) and self.noise_multiplier != 0:
            raise ConfigurationError("epsilon = inf requires noise_multiplier = 0")
        if not math.isinf(self.epsilon_target):
            if self.epsilon_target <= 0:
                raise ConfigurationError("epsilon target must be positive")
            if self.noise_multiplier <= 0:
                raise ConfigurationError(
                    "finite epsilon with sigma = 0 violates the privacy contract"
                )

    @property
    def private(self) -> bool:
        return not math.isinf(self.epsilon_target)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    epochs: int
    seed: int

    def __post_init__(self):
        if not (LR_RANGE[0] <= self.learning_rate <= LR_RANGE[1]):
            raise ConfigurationError(
                f"learning rate {self.learning_rate} outside searched range {LR_RANGE}"
            )
        if self.epochs <= 0:
            raise ConfigurationError("epochs must be positive")


def clip(g: np.ndarray, clip_c: float) -> np.ndarray:
    """Scale g by 1 / max(1, ||g|| / C); returns g itself when already in range."""
    if clip_c <= 0:
        raise ValueError(f"clip threshold must be positive, got {clip_c}")
    norm = float(np.sqrt(np.sum(np.asarray(g, dtype=np.float64) ** 2)))
    if norm <= clip_c:
        return g
    return g * (clip_c / norm)


def _clip_rows(G: np.ndarray, clip_c: float) -> np.ndarray:
    norms = np.sqrt(np.sum(G * G, axis=1))
    factors = np.ones_like(norms)
    over = norms > clip_c
    factors[over] = clip_c / norms[over]
    return G * factors[:, None]


def noisy_aggregate(clipped, sigma: float, clip_c: float, lot_size: int,
                    rng: Rng, dim: int | None = None) -> np.ndarray:
    """(1/L) * (sum of clipped gradients + N(0, sigma^2 C^2 I))."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    clipped = list(clipped)
    if not clipped:
        if dim is None:
            raise ValueError("empty lot needs an explicit gradient dimension")
        total = np.zeros(dim)
    else:
        total = np.sum(np.stack(clipped), axis=0)
    if sigma > 0:
        total = total + gaussian(rng, sigma * clip_c, total.shape)
    return total / lot_size


def step(theta: np.ndarray, noisy_grad: np.ndarray, gamma: float) -> np.ndarray:
    if theta.shape != noisy_grad.shape:
        raise ValueError(f"shape mismatch: {theta.shape} vs {noisy_grad.shape}")
    return theta - gamma * noisy_grad


def sample_lot(n: int, q: float, rng: Rng) -> np.ndarray:
    """Poisson sampling: each index kept independently with probability q.

    Returns indices in ascending order.
    """
    if not (0.0 < q <= 1.0):
        raise ValueError(f"sampling rate must be in (0,1], got {q}")
    return np.nonzero(rng.uniform(n) < q)[0]


def train(model: Model, data, strategy, privacy: PrivacyParams,
          opt: OptimizerConfig, eval_fn=None, use_dp_path: bool | None = None):
    """Run DP-SGD (or plain minibatch SGD when epsilon = inf).

    data: a FeaturizedData batch (`dpdesk.data`). strategy: TrainStrategy or
    a prebuilt FreezeMask. eval_fn(model) -> dict is called once per epoch
    and its entries are merged into that epoch's history row. use_dp_path
    forces the sample/clip/noise loop regardless of the privacy target
    (with sigma = 0 and a huge clip threshold it degenerates to plain SGD,
    which is exercised by tests).

    Returns (trained model copy, per-epoch history rows).
    """
    if isinstance(strategy, TrainStrategy):
        mask = apply_strategy(model, strategy)
    elif isinstance(strategy, FreezeMask):
        mask = strategy
    else:
        raise TypeError("strategy must be a TrainStrategy or FreezeMask")

    N = data.n
    if N == 0:
        raise ValueError("empty training set")
    L = privacy.lot_size
    steps_per_epoch = math.ceil(N / L)
    dp_path = privacy.private if use_dp_path is None else use_dp_path

    if privacy.private:
        if round(privacy.sampling_rate * N) != L:
            raise ConfigurationError(
                f"sampling rate {privacy.sampling_rate} x N={N} does not round "
                f"to lot size {L}"
            )
        if privacy.steps != opt.epochs * steps_per_epoch:
            raise ConfigurationError(
                f"accountant was given T={privacy.steps} steps but the run "
                f"executes {opt.epochs * steps_per_epoch}"
            )

    model = model.copy()
    theta = flatten_trainable(model, mask)
    root = Rng(opt.seed)
    lot_rng = root.spawn("lots")
    noise_rng = root.spawn("noise")

    history = []
    executed = 0
    for epoch in range(opt.epochs):
        t0 = time.perf_counter()
        epoch_losses = []
        if dp_path:
            for _ in range(steps_per_epoch):
                idx = sample_lot(N, privacy.sampling_rate, lot_rng)
                if len(idx):
                    sub = data.subset(idx)
                    G, losses = per_example_grads(model, mask, sub.X, sub.labels,
                                                  sub.starts)
                    total = _clip_rows(G, privacy.clip_c).sum(axis=0)
                    epoch_losses.extend(losses.tolist())
                else:
                    total = np.zeros_like(theta)
                if privacy.noise_multiplier > 0:
                    total = total + gaussian(
                        noise_rng, privacy.noise_multiplier * privacy.clip_c,
                        total.shape)
                theta = step(theta, total / L, opt.learning_rate)
                unflatten_trainable(model, mask, theta)
                executed += 1
        else:
            perm = lot_rng.permutation(N)
            for b in range(steps_per_epoch):
                idx = np.sort(perm[b * L:(b + 1) * L])
                sub = data.subset(idx)
                G, losses = per_example_grads(model, mask, sub.X, sub.labels,
                                              sub.starts)
                theta = step(theta, G.mean(axis=0), opt.learning_rate)
                unflatten_trainable(model, mask, theta)
                epoch_losses.extend(losses.tolist())

        row = {
            "epoch": epoch,
            "loss": float(np.mean(epoch_losses)) if epoch_losses else 0.0,
            "epoch_time": time.perf_counter() - t0,
        }
        if eval_fn is not None:
            row.update(eval_fn(model))
        history.append(row)

    if privacy.private and executed != privacy.steps:
        raise ConfigurationError(
            f"executed {executed} noisy steps but accounted for {privacy.steps}"
        )
    return model, history
