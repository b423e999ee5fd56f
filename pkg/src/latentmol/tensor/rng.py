"""Counter-based random streams.

A stream is a Philox generator keyed by ``(seed, stream id)``; the stream id
is a stable 64-bit hash of arbitrary labels, so ``stream(7, "start", 12)``
yields the same numbers in any process, on any worker, in any order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def stream_id(*labels) -> int:
    text = "\x1f".join(str(x) for x in labels).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def stream(seed: int, *labels, counter: int = 0) -> np.random.Generator:
    bitgen = np.random.Philox(key=np.array([seed & _MASK, stream_id(*labels)], dtype=np.uint64))
    if counter:
        bitgen = bitgen.advance(counter)
    return np.random.Generator(bitgen)


def normal(seed: int, shape, *labels, counter: int = 0) -> np.ndarray:
    return stream(seed, *labels, counter=counter).standard_normal(shape, dtype=np.float32)
