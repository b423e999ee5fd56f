"""Latent-space property regressor, fitted after the VAE or jointly with it."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from latentmol.codec import decode
from latentmol.codec.vocab import Vocab
from latentmol.errors import (
    ConfigError,
    DimMismatch,
    EmptyTrainingSet,
    IncompatibleCheckpoint,
    MissingProperties,
    OracleFailure,
)
from latentmol.models import layers as nn
from latentmol.models.train import TrainConfig, VaeCheckpoint, batch_rows, fit
from latentmol.models.vae import SequenceVAE, VaeConfig
from latentmol.molgraph import MolGraph
from latentmol.tensor import core as T
from latentmol.tensor import io
from latentmol.tensor.core import Tensor
from latentmol.tensor.optim import Adam
from latentmol.tensor.rng import normal, stream

KIND = "surrogate"

# scores a list of molecules into an (n, P) array, columns in property order
ScoreFn = Callable[[Sequence[MolGraph]], np.ndarray]


@dataclass(frozen=True)
class SurrogateConfig:
    hidden: int = 128
    steps: int = 2000
    batch_size: int = 128
    lr: float = 1e-3
    holdout: float = 0.1

    def __post_init__(self):
        if self.hidden < 1 or self.steps < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("surrogate hidden, steps, batch_size and lr must be positive")
        if not 0.0 <= self.holdout < 1.0:
            raise ConfigError("holdout fraction must lie in [0, 1)")

    def as_dict(self) -> dict:
        return asdict(self)


class Surrogate:
    """MLP ``z -> hidden -> hidden -> P`` working in normalised property units."""

    def __init__(
        self,
        names: Sequence[str],
        latent_dim: int,
        hidden: int = 128,
        mean: np.ndarray | None = None,
        std: np.ndarray | None = None,
        seed: int = 0,
        params: nn.Params | None = None,
    ):
        self.names = list(names)
        if not self.names:
            raise ConfigError("surrogate needs at least one property")
        p = len(self.names)
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.mean = np.zeros(p) if mean is None else np.asarray(mean, dtype=np.float64)
        self.std = np.ones(p) if std is None else np.asarray(std, dtype=np.float64)
        if self.mean.shape != (p,) or self.std.shape != (p,) or not np.all(self.std > 0):
            raise ConfigError("normalisation needs one mean and one positive std per property")
        if params is None:
            params = {}
            nn.init_mlp(params, "sur", [latent_dim, hidden, hidden, p], seed)
            # start from the training mean exactly
            params["sur.2.w"].data[:] = 0.0
        self.params = params
        if self.params["sur.0.w"].shape != (latent_dim, hidden) or self.params["sur.2.w"].shape != (hidden, p):
            raise DimMismatch("surrogate tensors do not match latent_dim, hidden and property count")

    @classmethod
    def fitted_to(cls, names, targets: np.ndarray, latent_dim: int, hidden: int = 128, seed: int = 0) -> "Surrogate":
        targets = np.asarray(targets, dtype=np.float64)
        std = targets.std(axis=0)
        std[~(std > 1e-12)] = 1.0
        return cls(names, latent_dim, hidden, targets.mean(axis=0), std, seed)

    def frozen(self) -> "Surrogate":
        """A view sharing weights but recording no parameter gradients."""
        params = {k: Tensor(v.data) for k, v in self.params.items()}
        return Surrogate(self.names, self.latent_dim, self.hidden, self.mean, self.std, params=params)

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def _as_latent(self, z) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=np.float32))
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise DimMismatch(f"latent must be (batch, {self.latent_dim}), got {z.shape}")
        return z

    def predict_normalized(self, z) -> Tensor:
        return nn.mlp(self.params, "sur", self._as_latent(z), depth=3)

    def predict(self, z) -> Tensor:
        """Predictions in property units; differentiable with respect to ``z``."""
        out = self.predict_normalized(z)
        std = Tensor(self.std.astype(out.dtype))
        return T.add(T.mul(out, std), Tensor(self.mean.astype(out.dtype)))

    def predict_numpy(self, z, batch_size: int = 1024) -> np.ndarray:
        z = np.asarray(z, dtype=np.float32)
        parts = [self.predict(z[s : s + batch_size]).data for s in range(0, len(z), batch_size)]
        return np.concatenate(parts).astype(np.float64) if parts else np.zeros((0, len(self.names)))

    def mse_term(self, z: Tensor, targets_normalized: np.ndarray) -> Tensor:
        diff = T.sub(self.predict_normalized(z), Tensor(np.asarray(targets_normalized, dtype=np.float32)))
        return T.mean(T.mul(diff, diff))

    def state(self) -> dict[str, np.ndarray]:
        return {k: self.params[k].data for k in sorted(self.params)}


def save_surrogate(path: str | Path, sur: Surrogate) -> None:
    header = {
        "kind": KIND,
        "names": ",".join(sur.names),
        "latent_dim": str(sur.latent_dim),
        "hidden": str(sur.hidden),
        "mean": ",".join(repr(float(x)) for x in sur.mean),
        "std": ",".join(repr(float(x)) for x in sur.std),
    }
    io.save(path, header, sur.state())


def load_surrogate(path: str | Path) -> Surrogate:
    header, tensors = io.load(path)
    if header.get("kind") != KIND:
        raise IncompatibleCheckpoint(f"{path} is not a surrogate checkpoint")
    try:
        return Surrogate(
            header["names"].split(","),
            int(header["latent_dim"]),
            int(header["hidden"]),
            np.array([float(x) for x in header["mean"].split(",")]),
            np.array([float(x) for x in header["std"].split(",")]),
            params={k: Tensor(v, requires_grad=True) for k, v in tensors.items()},
        )
    except (KeyError, ValueError, DimMismatch, ConfigError) as exc:
        raise IncompatibleCheckpoint(f"{path}: {exc}") from None


def fit_surrogate(sur: Surrogate, z: np.ndarray, targets: np.ndarray, config: SurrogateConfig, seed: int) -> list[float]:
    """Minibatch MSE regression of normalised targets on fixed latents."""
    z = np.asarray(z, dtype=np.float32)
    t = sur.normalize(targets)
    opt = Adam(dict(sur.params), lr_max=config.lr, total_steps=max(config.steps, 1))
    losses = []
    for step in range(config.steps):
        rows = batch_rows(seed, step, len(z), config.batch_size)
        loss = sur.mse_term(Tensor(z[rows]), t[rows])
        opt.zero_grad()
        T.backward(loss)
        opt.step(step)
        losses.append(float(loss.item()))
    return losses


def decode_latents(model: SequenceVAE, vocab: Vocab, z: np.ndarray, batch_size: int = 256) -> list[MolGraph]:
    out = []
    for s in range(0, len(z), batch_size):
        for ids in model.generate(z[s : s + batch_size]):
            out.append(decode(vocab.to_tokens(ids)))
    return out


@dataclass
class SequentialFit:
    surrogate: Surrogate
    heldout_mse: float
    train_losses: list[float]


def train_sequential(
    vae: VaeCheckpoint,
    score: ScoreFn,
    names: Sequence[str],
    n_samples: int,
    config: SurrogateConfig = SurrogateConfig(),
    seed: int = 0,
) -> SequentialFit:
    """Fit a surrogate to oracle scores of molecules decoded from prior samples.

    The VAE is only read. A random ``holdout`` share of the samples is kept
    out of training and reported as mean squared error in property units.
    """
    if n_samples < 1:
        raise EmptyTrainingSet("n_samples must be at least 1")
    model = vae.model
    z = normal(seed, (n_samples, model.config.latent_dim), "prior")
    graphs = decode_latents(model, vae.vocab, z)
    try:
        targets = np.asarray(score(graphs), dtype=np.float64)
    except OracleFailure:
        raise
    except Exception as exc:
        raise OracleFailure(f"oracle failed while scoring sampled molecules: {exc}") from exc
    if targets.shape != (n_samples, len(names)):
        raise OracleFailure(f"oracle returned shape {targets.shape}, expected {(n_samples, len(names))}")
    order = stream(seed, "split").permutation(n_samples)
    n_test = int(round(config.holdout * n_samples))
    if n_test >= n_samples:
        n_test = 0
    test, train = order[:n_test], order[n_test:]
    sur = Surrogate.fitted_to(names, targets[train], model.config.latent_dim, config.hidden, seed)
    losses = fit_surrogate(sur, z[train], targets[train], config, seed)
    mse = float("nan")
    if n_test:
        mse = float(np.mean((sur.predict_numpy(z[test]) - targets[test]) ** 2))
    return SequentialFit(sur, mse, losses)


def property_matrix(records: Sequence[dict[str, float]], names: Sequence[str]) -> np.ndarray:
    out = np.zeros((len(records), len(names)))
    for r, rec in enumerate(records):
        missing = [n for n in names if n not in rec]
        if missing:
            raise MissingProperties(f"molecule {r} lacks properties {missing}")
        out[r] = [rec[n] for n in names]
    if not np.all(np.isfinite(out)):
        raise MissingProperties("property values must be finite")
    return out


def train_joint(
    corpus: list[list[str]],
    records: Sequence[dict[str, float]],
    names: Sequence[str],
    vocab: Vocab,
    model_config: VaeConfig,
    config: TrainConfig,
    gamma: float = 1.0,
    hidden: int = 128,
) -> tuple[VaeCheckpoint, Surrogate]:
    """VAE and surrogate trained together on ELBO + gamma * MSE(predict(z), properties).

    The surrogate sees the reparameterised sample, so its gradient flows
    into the encoder.
    """
    if len(records) != len(corpus):
        raise MissingProperties(f"{len(corpus)} sequences but {len(records)} property records")
    if not math.isfinite(gamma) or gamma < 0:
        raise ConfigError("gamma must be finite and non-negative")
    targets = property_matrix(records, names)
    ids = vocab.pad_batch(corpus, model_config.max_len)
    model = SequenceVAE(model_config, len(vocab), seed=config.seed)
    sur = Surrogate.fitted_to(names, targets, model_config.latent_dim, hidden, config.seed)
    normalized = sur.normalize(targets)

    def extra(z: Tensor, rows: np.ndarray):
        mse = sur.mse_term(z, normalized[rows])
        return T.mul(mse, float(gamma)), {"mse": float(mse.item())}

    log = fit(model, ids, config, extra=extra, extra_params=sur.params)
    return VaeCheckpoint(model, vocab, config, log), sur
