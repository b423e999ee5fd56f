"""Minimal float32 tensors, reverse-mode autodiff, Adam, RNG streams, tensor files."""

from latentmol.tensor.core import (
    Tensor,
    add,
    backward,
    clip,
    concat,
    cross_entropy,
    embedding,
    exp,
    gaussian_reparameterize,
    index_select,
    layernorm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    softmax,
    sub,
    tanh,
    tensor,
    transpose,
)
from latentmol.tensor.core import sum as tsum
from latentmol.tensor.optim import Adam, cosine_lr
from latentmol.tensor.rng import normal, stream

__all__ = [
    "Adam", "Tensor", "add", "backward", "clip", "concat", "cosine_lr", "cross_entropy", "embedding",
    "exp", "gaussian_reparameterize", "index_select", "layernorm", "log", "log_softmax", "matmul",
    "mean", "mul", "normal", "relu", "reshape", "softmax", "stream", "sub", "tanh", "tensor",
    "transpose", "tsum",
]
