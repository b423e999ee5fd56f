from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from latentmol.codec.tokens import SPECIALS, Token, parse_token
from latentmol.errors import EmptyCorpus, ParseError

SPECIAL_STRINGS = tuple(str(t) for t in SPECIALS)
PAD_ID, BOS_ID, EOS_ID = 0, 1, 2


@dataclass(frozen=True)
class CorpusStats:
    total_tokens: int
    max_len: int
    avg_len: float

    def rows(self) -> list[tuple[str, str]]:
        return [
            ("Total tokens", str(self.total_tokens)),
            ("Max length", str(self.max_len)),
            ("Avg. length", f"{self.avg_len:.2f}"),
        ]


class Vocab:
    """Dense token index with pad=0, bos=1, eos=2.

    Tokens are kept as their bracketed strings so corpora written in other
    grammars (charged or stereo SELFIES, say) can still be counted.
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:3]) != SPECIAL_STRINGS:
            raise ValueError(f"vocab must start with {SPECIAL_STRINGS}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocab")
        self.tokens = tokens
        self.index = {t: k for k, t in enumerate(tokens)}
        self._parsed: list[Token] | None = None

    @classmethod
    def build(cls, corpus: Iterable[Sequence[str]]) -> "Vocab":
        seen = set()
        for seq in corpus:
            seen.update(str(t) for t in seq)
        seen.difference_update(SPECIAL_STRINGS)
        return cls(list(SPECIAL_STRINGS) + sorted(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    @property
    def parsed(self) -> list[Token]:
        if self._parsed is None:
            self._parsed = [parse_token(t) for t in self.tokens]
        return self._parsed

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode()).hexdigest()[:16]

    def ids(self, seq: Sequence) -> list[int]:
        try:
            return [self.index[str(t)] for t in seq]
        except KeyError as exc:
            raise ParseError(f"token {exc.args[0]} not in vocab") from None

    def to_tokens(self, ids: Iterable[int]) -> list[Token]:
        parsed = self.parsed
        return [parsed[i] for i in ids]

    def pad_batch(self, seqs: Sequence[Sequence], max_len: int) -> np.ndarray:
        """Index rows ``tokens + eos`` right-padded to ``max_len + 1`` columns."""
        out = np.full((len(seqs), max_len + 1), PAD_ID, dtype=np.int64)
        for r, seq in enumerate(seqs):
            ids = self.ids(seq)
            if len(ids) > max_len:
                raise ParseError(f"sequence of length {len(ids)} exceeds max_len {max_len}")
            out[r, : len(ids)] = ids
            out[r, len(ids)] = EOS_ID
        return out

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "Vocab":
        lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
        while lines and not lines[-1]:
            lines.pop()
        try:
            return cls(lines)
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from None


def corpus_stats(corpus: Sequence[Sequence], vocab: Vocab | None = None) -> CorpusStats:
    """Distinct non-special tokens, longest and mean sequence length."""
    if not corpus:
        raise EmptyCorpus("corpus is empty")
    distinct = set()
    lengths = []
    for seq in corpus:
        body = [str(t) for t in seq if str(t) not in SPECIAL_STRINGS]
        if vocab is not None:
            vocab.ids(body)
        distinct.update(body)
        lengths.append(len(body))
    return CorpusStats(
        total_tokens=len(distinct),
        max_len=max(lengths),
        avg_len=round(sum(lengths) / len(lengths), 2),
    )
