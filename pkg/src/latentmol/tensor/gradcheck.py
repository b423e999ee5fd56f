from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from latentmol.tensor.core import Tensor, backward


def numerical_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], h: float = 1e-3) -> list[np.ndarray]:
    """Central differences of ``fn`` evaluated in float64."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    out = []
    for k, arr in enumerate(base):
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = fn(*[Tensor(b) for b in base]).item()
            flat[i] = keep - h
            down = fn(*[Tensor(b) for b in base]).item()
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        out.append(grad)
    return out


def analytic_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], dtype=np.float32) -> list[np.ndarray]:
    inputs = [Tensor(np.asarray(a, dtype=dtype), requires_grad=True) for a in arrays]
    backward(fn(*inputs))
    return [t.grad if t.grad is not None else np.zeros(t.shape, dtype=dtype) for t in inputs]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def max_relative_error(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], h: float = 1e-3) -> float:
    analytic = analytic_gradients(fn, arrays)
    numeric = numerical_gradients(fn, arrays, h=h)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
