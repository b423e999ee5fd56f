"""Parameter containers and the building blocks shared by the decoders."""

from __future__ import annotations

import math

import numpy as np

from latentmol.tensor import core as T
from latentmol.tensor.core import Tensor
from latentmol.tensor.rng import stream

NEG_INF = -1e9

Params = dict[str, Tensor]


def init_linear(params: Params, name: str, n_in: int, n_out: int, seed: int, gain: float = 1.0) -> None:
    rng = stream(seed, "init", name)
    w = rng.standard_normal((n_in, n_out), dtype=np.float32) * np.float32(gain / math.sqrt(n_in))
    params[f"{name}.w"] = Tensor(w, requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(n_out, dtype=np.float32), requires_grad=True)


def init_table(params: Params, name: str, rows: int, cols: int, seed: int, scale: float) -> None:
    rng = stream(seed, "init", name)
    params[name] = Tensor(rng.standard_normal((rows, cols), dtype=np.float32) * np.float32(scale), requires_grad=True)


def init_norm(params: Params, name: str, width: int) -> None:
    params[f"{name}.g"] = Tensor(np.ones(width, dtype=np.float32), requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(width, dtype=np.float32), requires_grad=True)


def linear(params: Params, name: str, x: Tensor) -> Tensor:
    return T.add(T.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def norm(params: Params, name: str, x: Tensor) -> Tensor:
    return T.add(T.mul(T.layernorm(x), params[f"{name}.g"]), params[f"{name}.b"])


def mlp(params: Params, name: str, x: Tensor, depth: int) -> Tensor:
    """``depth`` linear layers with relu between them."""
    for k in range(depth):
        x = linear(params, f"{name}.{k}", x)
        if k < depth - 1:
            x = T.relu(x)
    return x


def init_mlp(params: Params, name: str, sizes: list[int], seed: int) -> None:
    for k in range(len(sizes) - 1):
        gain = math.sqrt(2.0) if k < len(sizes) - 2 else 1.0
        init_linear(params, f"{name}.{k}", sizes[k], sizes[k + 1], seed, gain=gain)


def _heads(x: Tensor, heads: int) -> Tensor:
    b, n, w = x.shape
    return T.transpose(T.reshape(x, (b, n, heads, w // heads)), (0, 2, 1, 3))


def attention(params: Params, name: str, query: Tensor, memory: Tensor, mask: np.ndarray, heads: int) -> Tensor:
    """Multi-head attention of ``query`` (B, Lq, W) over ``memory`` (B, Lk, W).

    ``mask`` is additive and already shaped (B, heads, Lq, Lk) or (Lq, Lk).
    """
    b, lq, w = query.shape
    q = _heads(linear(params, f"{name}.q", query), heads)
    k = _heads(linear(params, f"{name}.k", memory), heads)
    v = _heads(linear(params, f"{name}.v", memory), heads)
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(w // heads))
    scores = T.add(scores, Tensor(mask.astype(scores.dtype)))
    out = T.matmul(T.softmax(scores), v)
    out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (b, lq, w))
    return linear(params, f"{name}.o", out)


def init_block(params: Params, name: str, width: int, ffn: int, seed: int) -> None:
    init_norm(params, f"{name}.ln1", width)
    for part in ("q", "k", "v", "o"):
        init_linear(params, f"{name}.attn.{part}", width, width, seed)
    init_norm(params, f"{name}.ln2", width)
    init_linear(params, f"{name}.ff.0", width, ffn, seed, gain=math.sqrt(2.0))
    init_linear(params, f"{name}.ff.1", ffn, width, seed)


def block(params: Params, name: str, x: Tensor, prefix: Tensor, mask: np.ndarray, heads: int) -> Tensor:
    """Pre-norm transformer block; keys/values are ``prefix`` followed by ``x``."""
    h = norm(params, f"{name}.ln1", x)
    kv = T.concat([prefix, h], axis=1)
    x = T.add(x, attention(params, f"{name}.attn", h, kv, mask, heads))
    h = norm(params, f"{name}.ln2", x)
    h = linear(params, f"{name}.ff.1", T.relu(linear(params, f"{name}.ff.0", h)))
    return T.add(x, h)
