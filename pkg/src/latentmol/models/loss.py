from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from latentmol.codec.vocab import EOS_ID, PAD_ID
from latentmol.errors import BadIterationCount, ConfigError, ShapeMismatch
from latentmol.tensor import core as T
from latentmol.tensor.core import Tensor


@dataclass(frozen=True)
class BetaSchedule:
    """Cyclic KL weight: linear ramp over the first ``ramp * cycle`` steps, then hold."""

    beta_max: float = 0.1
    cycle: int = 1000
    ramp: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.ramp <= 1.0:
            raise ConfigError("ramp fraction must lie in (0, 1]")
        if self.cycle < 1 or self.beta_max < 0:
            raise ConfigError("cycle must be positive and beta_max non-negative")


def beta_at(step: int, schedule: BetaSchedule) -> float:
    pos = step % schedule.cycle
    ramp_steps = schedule.ramp * schedule.cycle
    if pos >= ramp_steps:
        return schedule.beta_max
    return schedule.beta_max * pos / ramp_steps


def kl_divergence(mu: Tensor, logvar: Tensor) -> Tensor:
    """Summed ``KL(N(mu, exp(logvar)) || N(0, I))`` over the whole batch."""
    if mu.shape != logvar.shape:
        raise ShapeMismatch(f"mu {mu.shape} vs logvar {logvar.shape}")
    inner = T.sub(T.add(T.mul(mu, mu), T.exp(logvar)), T.add(logvar, 1.0))
    return T.mul(T.sum(inner), 0.5)


def token_weights(ids: np.ndarray) -> np.ndarray:
    """1 on real tokens and the closing eos, 0 on padding."""
    return (np.asarray(ids) != PAD_ID).astype(np.float32)


def elbo_loss(ids: np.ndarray, mu: Tensor, logvar: Tensor, logits: Tensor, beta: float) -> tuple[Tensor, Tensor, Tensor]:
    """``(loss, recon, kl)``, each averaged over the batch.

    Reconstruction is the token cross-entropy summed over non-pad positions.
    """
    ids = np.asarray(ids)
    if logits.shape[:-1] != ids.shape or mu.shape[0] != ids.shape[0]:
        raise ShapeMismatch(f"logits {logits.shape} do not match ids {ids.shape}")
    b = ids.shape[0]
    recon = T.mul(T.cross_entropy(logits, ids, token_weights(ids)), 1.0 / b)
    return combine(recon, kl_divergence(mu, logvar), beta, b)


def combine(recon: Tensor, kl_sum: Tensor, beta: float, batch: int) -> tuple[Tensor, Tensor, Tensor]:
    kl = T.mul(kl_sum, 1.0 / batch)
    return T.add(recon, T.mul(kl, float(beta))), recon, kl


def mask_schedule(n: int, iterations: int) -> list[int]:
    """Masked positions entering each refinement iteration: ``ceil(n (T - t + 1) / T)``."""
    if iterations < 1:
        raise BadIterationCount(f"iterations must be >= 1, got {iterations}")
    return [math.ceil(n * (iterations - t + 1) / iterations) for t in range(1, iterations + 1)]


def sequence_lengths(ids: np.ndarray) -> np.ndarray:
    """Token count before the first eos in each padded row."""
    ids = np.asarray(ids)
    return (ids == EOS_ID).argmax(axis=1)
