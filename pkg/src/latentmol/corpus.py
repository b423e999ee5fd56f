"""Desk-scale corpora: random molecules via decode totality, and property files."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from latentmol.codec import GroupDict, Token, atom, branch, decode, encode, join_tokens, parse_tokens, ring
from latentmol.codec.tokens import INDEX_TOKENS
from latentmol.errors import EmptyCorpus, ParseError, UnencodableGraph
from latentmol.molgraph import MolGraph
from latentmol.tensor.rng import stream

# Sampling weights for the generator alphabet; roughly organic, ring-rich.
_ALPHABET: list[tuple[Token, float]] = [
    (atom("C"), 30.0),
    (atom("C", 2), 6.0),
    (atom("C", 3), 0.5),
    (atom("N"), 5.0),
    (atom("N", 2), 1.5),
    (atom("O"), 4.0),
    (atom("O", 2), 2.0),
    (atom("F"), 0.7),
    (atom("S"), 0.7),
    (atom("Cl"), 0.5),
    (atom("Br"), 0.2),
    (atom("P"), 0.1),
    (atom("I"), 0.1),
    (branch(1), 6.0),
    (ring(1), 7.0),
    (ring(1, 2), 1.5),
]


def random_tokens(rng: np.random.Generator, length: int) -> list[Token]:
    tokens = [t for t, _ in _ALPHABET]
    weights = np.array([w for _, w in _ALPHABET])
    picks = rng.choice(len(tokens), size=length, p=weights / weights.sum())
    out = []
    for k in picks:
        t = tokens[k]
        out.append(t)
        if t.kind in ("branch", "ring"):
            # small size indices give rings of 5-7 atoms and short side chains
            q = int(rng.integers(3, 6)) if t.kind == "ring" else int(rng.integers(0, 4))
            out.append(INDEX_TOKENS[q])
    return out


def generate_corpus(
    n: int,
    seed: int,
    min_atoms: int = 8,
    max_atoms: int = 34,
    max_len: int = 72,
    groups: GroupDict | None = None,
) -> list[MolGraph]:
    """``n`` distinct connected molecules built from random token strings."""
    from latentmol.molgraph import canonical_string

    rng = stream(seed, "corpus")
    seen: set[str] = set()
    out: list[MolGraph] = []
    while len(out) < n:
        length = int(rng.integers(min_atoms + 8, max_atoms + 16))
        graph = decode(random_tokens(rng, length)).largest_component()
        if not min_atoms <= len(graph) <= max_atoms:
            continue
        key = canonical_string(graph)
        if key in seen:
            continue
        try:
            encode(graph, groups, max_len=max_len)
        except UnencodableGraph:
            continue
        seen.add(key)
        out.append(graph)
    return out


def read_corpus(path: str | Path) -> list[list[str]]:
    """One bracketed token string per line; blank lines ignored."""
    from latentmol.codec import split_tokens

    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        out.append(split_tokens(line, lineno))
    if not out:
        raise EmptyCorpus(f"{path} contains no sequences")
    return out


def write_corpus(path: str | Path, seqs: Iterable[Sequence[Token]]) -> None:
    Path(path).write_text("".join(join_tokens(s) + "\n" for s in seqs))


def read_property_file(path: str | Path) -> list[tuple[list[Token], dict[str, float]]]:
    """``token_string<TAB>name=value;name=value`` per line."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise ParseError("expected token string and properties separated by a tab", lineno)
        tokens = parse_tokens(parts[0], lineno)
        props = {}
        for item in filter(None, parts[1].split(";")):
            name, sep, value = item.partition("=")
            if not sep:
                raise ParseError(f"malformed property {item!r}", lineno)
            try:
                props[name.strip()] = float(value)
            except ValueError:
                raise ParseError(f"non-numeric property {item!r}", lineno) from None
        rows.append((tokens, props))
    if not rows:
        raise EmptyCorpus(f"{path} contains no molecules")
    return rows


def write_property_file(path: str | Path, rows: Iterable[tuple[Sequence[Token], dict[str, float]]]) -> None:
    lines = []
    for tokens, props in rows:
        body = ";".join(f"{k}={float(v)!r}" for k, v in props.items())
        lines.append(f"{join_tokens(tokens)}\t{body}\n")
    Path(path).write_text("".join(lines))
