"""Sequence VAE: MLP encoder over one-hot grids plus three decoder families.

Sequences are index rows of width ``max_len + 1`` (tokens, eos, then pad) as
produced by :meth:`Vocab.pad_batch`. The decoders differ in how they model
``p(x | z)``:

``nar``    an MLP producing every position's logits at once;
``ar``     a causal transformer reading bos-shifted tokens, z as a memory slot;
``cmlmc``  a bidirectional transformer that predicts a length, then fills a
           fully masked sequence and repeatedly re-masks its least confident
           positions.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from latentmol.codec.vocab import BOS_ID, EOS_ID, PAD_ID
from latentmol.errors import BadIterationCount, ConfigError, DimMismatch, ShapeMismatch
from latentmol.models import layers as nn
from latentmol.models.loss import mask_schedule
from latentmol.tensor import core as T
from latentmol.tensor.core import Tensor
from latentmol.tensor.rng import stream

ARCHITECTURES = {"nar": "nar_mlp", "ar": "ar_transformer", "cmlmc": "cmlmc"}
SPECIAL_IDS = (PAD_ID, BOS_ID, EOS_ID)


@dataclass(frozen=True)
class VaeConfig:
    decoder: str = "nar"
    latent_dim: int = 64
    hidden: int = 128
    layers: int = 2
    heads: int = 4
    max_len: int = 72
    denoise_rate: float = 0.15

    def __post_init__(self):
        if self.decoder not in ARCHITECTURES:
            raise ConfigError(f"decoder must be one of {sorted(ARCHITECTURES)}, got {self.decoder!r}")
        for name in ("latent_dim", "hidden", "layers", "heads", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.hidden % self.heads:
            raise ConfigError("hidden must be divisible by heads")
        if not 0.0 <= self.denoise_rate < 1.0:
            raise ConfigError("denoise_rate must lie in [0, 1)")

    @property
    def arch(self) -> str:
        return ARCHITECTURES[self.decoder]

    @property
    def width(self) -> int:
        """Sequence tensor width: tokens plus the closing eos."""
        return self.max_len + 1

    def as_dict(self) -> dict:
        return asdict(self)


class SequenceVAE:
    def __init__(self, config: VaeConfig, vocab_size: int, seed: int = 0, params: nn.Params | None = None):
        self.config = config
        self.vocab_size = vocab_size
        if params is None:
            params = {}
            self._init_params(params, seed)
        self.params = params
        self._check_shapes()

    # ------------------------------------------------------------ params

    def _init_params(self, p: nn.Params, seed: int) -> None:
        c, v, h = self.config, self.vocab_size, self.config.hidden
        # one-hot (position, token) grid through a linear layer, stored as a lookup table
        nn.init_table(p, "enc.in", c.width * v, h, seed, scale=math.sqrt(2.0 / c.width))
        p["enc.in.b"] = Tensor(np.zeros(h, dtype=np.float32), requires_grad=True)
        nn.init_linear(p, "enc.hid", h, h, seed, gain=math.sqrt(2.0))
        nn.init_linear(p, "enc.mu", h, c.latent_dim, seed)
        nn.init_linear(p, "enc.logvar", h, c.latent_dim, seed, gain=0.1)
        if c.decoder == "nar":
            nn.init_mlp(p, "dec.mlp", [c.latent_dim, h, h, c.width * v], seed)
            return
        extra = 1 if c.decoder == "cmlmc" else 0  # mask id = vocab_size
        nn.init_table(p, "dec.tok", v + extra, h, seed, scale=0.1)
        nn.init_table(p, "dec.pos", c.width, h, seed, scale=0.1)
        nn.init_linear(p, "dec.mem", c.latent_dim, h, seed)
        for k in range(c.layers):
            nn.init_block(p, f"dec.block{k}", h, 2 * h, seed)
        nn.init_norm(p, "dec.ln", h)
        nn.init_linear(p, "dec.out", h, v, seed)
        if c.decoder == "cmlmc":
            nn.init_linear(p, "dec.length", c.latent_dim, c.max_len + 1, seed)

    def _check_shapes(self) -> None:
        c, v = self.config, self.vocab_size
        table = self.params.get("enc.in")
        if table is None or table.shape != (c.width * v, c.hidden):
            raise ShapeMismatch("encoder table does not match dims and vocab size")
        if c.decoder == "nar":
            out = self.params.get("dec.mlp.2.w")
            if out is None or out.shape != (c.hidden, c.width * v):
                raise ShapeMismatch("decoder output layer does not match dims and vocab size")
        else:
            out = self.params.get("dec.out.w")
            if out is None or out.shape != (c.hidden, v):
                raise ShapeMismatch("decoder output layer does not match dims and vocab size")

    @property
    def mask_id(self) -> int:
        return self.vocab_size

    # ----------------------------------------------------------- encoder

    def _check_ids(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2 or ids.shape[1] != self.config.width:
            raise ShapeMismatch(f"expected (batch, {self.config.width}) ids, got {ids.shape}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ShapeMismatch("token ids outside the vocabulary")
        return ids

    def encode(self, ids: np.ndarray, noise: np.ndarray | None = None) -> tuple[Tensor, Tensor, Tensor]:
        """Return ``(mu, logvar, z)``; ``z = mu`` when ``noise`` is None."""
        ids = self._check_ids(ids)
        p = self.params
        flat = ids + (np.arange(self.config.width) * self.vocab_size)[None, :]
        h = T.sum(T.embedding(p["enc.in"], flat), axis=1)
        h = T.relu(T.add(h, p["enc.in.b"]))
        h = T.relu(nn.linear(p, "enc.hid", h))
        mu = nn.linear(p, "enc.mu", h)
        logvar = T.clip(nn.linear(p, "enc.logvar", h), -10.0, 10.0)
        if noise is None:
            return mu, logvar, mu
        return mu, logvar, T.gaussian_reparameterize(mu, logvar, noise)

    # ----------------------------------------------------------- decoders

    def _as_latent(self, z) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=np.float32))
        if z.ndim != 2 or z.shape[1] != self.config.latent_dim:
            raise DimMismatch(f"latent must be (batch, {self.config.latent_dim}), got {z.shape}")
        return z

    def nar_logits(self, z) -> Tensor:
        z = self._as_latent(z)
        out = nn.mlp(self.params, "dec.mlp", z, depth=3)
        return T.reshape(out, (z.shape[0], self.config.width, self.vocab_size))

    def _transformer(self, z: Tensor, inputs: np.ndarray, mask: np.ndarray) -> Tensor:
        p, c = self.params, self.config
        n = inputs.shape[1]
        x = T.add(T.embedding(p["dec.tok"], inputs), T.index_select(p["dec.pos"], slice(0, n)))
        memory = T.reshape(nn.linear(p, "dec.mem", z), (z.shape[0], 1, c.hidden))
        for k in range(c.layers):
            x = nn.block(p, f"dec.block{k}", x, nn.norm(p, f"dec.block{k}.ln1", memory), mask, c.heads)
        return nn.linear(p, "dec.out", nn.norm(p, "dec.ln", x))

    @staticmethod
    def causal_mask(n: int) -> np.ndarray:
        """(n, n + 1) additive mask; column 0 is the latent memory slot."""
        mask = np.zeros((n, n + 1), dtype=np.float32)
        mask[:, 1:][np.triu_indices(n, k=1)] = nn.NEG_INF
        return mask

    def ar_logits(self, z, ids: np.ndarray) -> Tensor:
        """Teacher-forced logits; position i sees bos and ``ids[:, :i]``."""
        z = self._as_latent(z)
        ids = np.asarray(ids, dtype=np.int64)
        inputs = np.concatenate([np.full((ids.shape[0], 1), BOS_ID), ids[:, :-1]], axis=1)
        return self._transformer(z, inputs, self.causal_mask(inputs.shape[1]))

    def _length_mask(self, lengths: np.ndarray, n: int) -> np.ndarray:
        """(B, heads, n, n + 1) additive mask hiding positions at or past each length."""
        hidden = np.arange(n)[None, :] >= np.asarray(lengths)[:, None]
        mask = np.zeros((len(lengths), 1, 1, n + 1), dtype=np.float32)
        mask[:, 0, 0, 1:][hidden] = nn.NEG_INF
        return np.broadcast_to(mask, (len(lengths), self.config.heads, n, n + 1))

    def length_logits(self, z) -> Tensor:
        return nn.linear(self.params, "dec.length", self._as_latent(z))

    def cmlm_logits(self, z, inputs: np.ndarray, lengths: np.ndarray) -> Tensor:
        """Logits for the ``max_len`` token slots given partially masked inputs."""
        z = self._as_latent(z)
        inputs = np.asarray(inputs, dtype=np.int64)
        return self._transformer(z, inputs, self._length_mask(lengths, inputs.shape[1]))

    # ---------------------------------------------------------- inference

    def greedy_ar(self, z) -> list[list[int]]:
        # recomputes the whole prefix every step; fine at these lengths
        z = self._as_latent(z)
        b, width = z.shape[0], self.config.width
        inputs = np.full((b, 1), BOS_ID, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        out: list[list[int]] = [[] for _ in range(b)]
        for i in range(width):
            logits = self._transformer(z, inputs, self.causal_mask(i + 1)).data[:, -1]
            logits[:, [PAD_ID, BOS_ID]] = -np.inf
            if i == width - 1:
                nxt = np.full(b, EOS_ID)
            else:
                nxt = logits.argmax(axis=-1)
            for r in range(b):
                if not done[r]:
                    if nxt[r] == EOS_ID:
                        done[r] = True
                    else:
                        out[r].append(int(nxt[r]))
            if done.all():
                break
            inputs = np.concatenate([inputs, nxt[:, None]], axis=1)
        return out

    def sample_ar(self, z, seed: int, *labels) -> list[list[int]]:
        z = self._as_latent(z)
        rng = stream(seed, "sample", *labels)
        b, width = z.shape[0], self.config.width
        inputs = np.full((b, 1), BOS_ID, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        out: list[list[int]] = [[] for _ in range(b)]
        for i in range(width):
            logits = self._transformer(z, inputs, self.causal_mask(i + 1)).data[:, -1].astype(np.float64)
            logits[:, [PAD_ID, BOS_ID]] = -np.inf
            probs = np.exp(logits - logits.max(axis=-1, keepdims=True))
            probs /= probs.sum(axis=-1, keepdims=True)
            u = rng.random(b)
            nxt = np.minimum((probs.cumsum(axis=-1) < u[:, None]).sum(axis=-1), self.vocab_size - 1)
            if i == width - 1:
                nxt[:] = EOS_ID
            for r in range(b):
                if not done[r]:
                    if nxt[r] == EOS_ID:
                        done[r] = True
                    else:
                        out[r].append(int(nxt[r]))
            if done.all():
                break
            inputs = np.concatenate([inputs, nxt[:, None]], axis=1)
        return out

    def mask_predict(self, z, iterations: int, trace: list | None = None) -> list[list[int]]:
        """Iterative refinement from a fully masked sequence of predicted length.

        If ``trace`` is given, the number of masked positions entering each
        iteration is appended per sequence as a list.
        """
        if iterations < 1:
            raise BadIterationCount(f"iterations must be >= 1, got {iterations}")
        z = self._as_latent(z)
        b, slots = z.shape[0], self.config.max_len
        lengths = self.length_logits(z).data.argmax(axis=-1)
        tokens = np.full((b, slots), self.mask_id, dtype=np.int64)
        conf = np.zeros((b, slots))
        masked = np.arange(slots)[None, :] < lengths[:, None]
        counts: list[list[int]] = [[] for _ in range(b)]
        for t in range(1, iterations + 1):
            for r in range(b):
                counts[r].append(int(masked[r].sum()))
            logits = self.cmlm_logits(z, tokens, lengths).data.astype(np.float64)
            logits[..., list(SPECIAL_IDS)] = -np.inf
            probs = np.exp(logits - logits.max(axis=-1, keepdims=True))
            probs /= probs.sum(axis=-1, keepdims=True)
            best = probs.argmax(axis=-1)
            tokens = np.where(masked, best, tokens)
            conf = np.where(masked, probs.max(axis=-1), conf)
            masked = np.zeros_like(masked)
            for r in range(b):
                n = int(lengths[r])
                if t < iterations and n:
                    k = mask_schedule(n, iterations)[t]
                    order = np.argsort(conf[r, :n], kind="stable")
                    masked[r, order[:k]] = True
                    tokens[r, order[:k]] = self.mask_id
        if trace is not None:
            trace.extend(counts)
        return [[int(x) for x in tokens[r, : int(lengths[r])]] for r in range(b)]

    def generate(self, z, iterations: int = 10) -> list[list[int]]:
        """Deterministic decoding to token id lists (specials removed)."""
        c = self.config
        if c.decoder == "ar":
            return self.greedy_ar(z)
        if c.decoder == "cmlmc":
            return self.mask_predict(z, iterations)
        ids = self.nar_logits(z).data.argmax(axis=-1)
        out = []
        for row in ids:
            seq = []
            for i in row:
                if i == EOS_ID:
                    break
                if i not in SPECIAL_IDS:
                    seq.append(int(i))
            out.append(seq)
        return out

    # ------------------------------------------------------------ helpers

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state(self) -> dict[str, np.ndarray]:
        return {k: self.params[k].data for k in sorted(self.params)}
