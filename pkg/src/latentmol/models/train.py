from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from latentmol.codec.vocab import PAD_ID, Vocab
from latentmol.errors import ConfigError, DivergedLoss, EmptyCorpus
from latentmol.models.loss import BetaSchedule, beta_at, combine, kl_divergence, sequence_lengths, token_weights
from latentmol.models.vae import SPECIAL_IDS, SequenceVAE, VaeConfig
from latentmol.tensor import core as T
from latentmol.tensor.core import Tensor
from latentmol.tensor.optim import Adam
from latentmol.tensor.rng import normal, stream


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 5000
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    beta: BetaSchedule = field(default_factory=BetaSchedule)

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("steps >= 0, batch_size >= 1 and lr > 0 are required")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class VaeCheckpoint:
    model: SequenceVAE
    vocab: Vocab
    train: TrainConfig
    log: list[dict] = field(default_factory=list)

    @property
    def config(self) -> VaeConfig:
        return self.model.config


# an extra loss term: (z sample, batch rows) -> (weighted scalar, log fields)
ExtraTerm = Callable[[Tensor, np.ndarray], tuple[Tensor, dict]]


def batch_rows(seed: int, step: int, n: int, batch_size: int) -> np.ndarray:
    rng = stream(seed, "batch", step)
    if n <= batch_size:
        return rng.permutation(n)
    return np.sort(rng.choice(n, size=batch_size, replace=False))


def reconstruction(model: SequenceVAE, ids: np.ndarray, z: Tensor, rng: np.random.Generator) -> Tensor:
    """Batch-mean reconstruction loss for the model's decoder family."""
    c = model.config
    b = ids.shape[0]
    if c.decoder == "nar":
        return T.mul(T.cross_entropy(model.nar_logits(z), ids, token_weights(ids)), 1.0 / b)
    if c.decoder == "ar":
        return T.mul(T.cross_entropy(model.ar_logits(z, ids), ids, token_weights(ids)), 1.0 / b)
    return T.mul(cmlm_loss(model, ids, z, rng), 1.0 / b)


def cmlm_loss(model: SequenceVAE, ids: np.ndarray, z: Tensor, rng: np.random.Generator) -> Tensor:
    """Length cross-entropy + masked-token loss + denoising loss on substituted tokens.

    Per row, k ~ U{1..n} positions are masked; each remaining position is
    replaced by a random token with probability ``denoise_rate`` and must be
    restored.
    """
    c = model.config
    lengths = sequence_lengths(ids)
    targets = ids[:, : c.max_len].copy()
    inputs = targets.copy()
    weights = np.zeros(targets.shape, dtype=np.float32)
    regular = np.array([i for i in range(model.vocab_size) if i not in SPECIAL_IDS])
    for r, n in enumerate(lengths):
        n = int(n)
        if n == 0:
            continue
        k = int(rng.integers(1, n + 1))
        order = rng.permutation(n)
        masked, kept = order[:k], order[k:]
        inputs[r, masked] = model.mask_id
        weights[r, masked] = 1.0
        flip = kept[rng.random(len(kept)) < c.denoise_rate]
        if len(flip) and len(regular):
            inputs[r, flip] = rng.choice(regular, size=len(flip))
            weights[r, flip] = 1.0
    logits = model.cmlm_logits(z, inputs, lengths)
    token_term = T.cross_entropy(logits, targets, weights)
    length_term = T.cross_entropy(model.length_logits(z), lengths)
    return T.add(token_term, length_term)


def fit(
    model: SequenceVAE,
    ids: np.ndarray,
    config: TrainConfig,
    extra: ExtraTerm | None = None,
    extra_params: dict[str, Tensor] | None = None,
) -> list[dict]:
    """Minibatch Adam on the beta-weighted ELBO (plus an optional extra term).

    Randomness per step comes from streams keyed by the step number, so a
    run is a pure function of (model init, data, config).
    """
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        raise EmptyCorpus("no training sequences")
    params = dict(model.params)
    if extra_params:
        params.update(extra_params)
    opt = Adam(params, lr_max=config.lr, total_steps=max(config.steps, 1))
    log = []
    d = model.config.latent_dim
    for step in range(config.steps):
        rows = batch_rows(config.seed, step, len(ids), config.batch_size)
        batch = ids[rows]
        noise = normal(config.seed, (len(rows), d), "noise", step)
        mu, logvar, z = model.encode(batch, noise)
        recon = reconstruction(model, batch, z, stream(config.seed, "mask", step))
        beta = beta_at(step, config.beta)
        loss, recon, kl = combine(recon, kl_divergence(mu, logvar), beta, len(rows))
        row = {"step": step, "recon": float(recon.item()), "kl": float(kl.item()), "beta": beta}
        if extra is not None:
            term, fields = extra(z, rows)
            loss = T.add(loss, term)
            row.update(fields)
        value = loss.item()
        if not math.isfinite(value):
            raise DivergedLoss(f"non-finite loss at step {step}: {row}")
        opt.zero_grad()
        T.backward(loss)
        row["lr"] = opt.step(step)
        row["loss"] = value
        log.append(row)
    return log


def train_vae(
    corpus: list[list[str]],
    vocab: Vocab,
    model_config: VaeConfig,
    config: TrainConfig,
) -> VaeCheckpoint:
    if not corpus:
        raise EmptyCorpus("no training sequences")
    ids = vocab.pad_batch(corpus, model_config.max_len)
    model = SequenceVAE(model_config, len(vocab), seed=config.seed)
    log = fit(model, ids, config)
    return VaeCheckpoint(model, vocab, config, log)


def token_accuracy(model: SequenceVAE, ids: np.ndarray, batch_size: int = 256) -> float:
    """Fraction of non-pad positions whose argmax matches, decoding from ``mu``.

    The transformer decoders are teacher-forced so every position is scored.
    """
    ids = np.asarray(ids, dtype=np.int64)
    hit = total = 0.0
    for s in range(0, len(ids), batch_size):
        batch = ids[s : s + batch_size]
        mu, _, _ = model.encode(batch)
        c = model.config
        if c.decoder == "nar":
            pred = model.nar_logits(mu).data.argmax(axis=-1)
            target, w = batch, token_weights(batch)
        elif c.decoder == "ar":
            pred = model.ar_logits(mu, batch).data.argmax(axis=-1)
            target, w = batch, token_weights(batch)
        else:
            lengths = sequence_lengths(batch)
            target = batch[:, : c.max_len]
            inputs = np.where(target == PAD_ID, PAD_ID, model.mask_id)
            pred = model.cmlm_logits(mu, inputs, lengths).data.argmax(axis=-1)
            w = (np.arange(c.max_len)[None, :] < lengths[:, None]).astype(np.float32)
        hit += float(((pred == target) * w).sum())
        total += float(w.sum())
    return hit / total if total else 0.0
