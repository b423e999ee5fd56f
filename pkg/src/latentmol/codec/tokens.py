from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from latentmol.errors import ParseError
from latentmol.molgraph import BOND_ORDERS, ELEMENTS

# Branch and ring tokens read their size from the next 1-3 tokens, each
# contributing one hexadecimal digit.
INDEX_BASE = 16
LENGTH_CLASSES = (1, 2, 3)

_PREFIX = {1: "", 2: "=", 3: "#"}
_PREFIX_ORDER = {"": 1, "=": 2, "#": 3}
_BRACKETED = re.compile(r"\[([^\[\]]*)\]")
_BODY = re.compile(r"^(=|#)?(Branch|Ring|G)(\d+)$|^(=|#)?(Cl|Br|[CNOFSPI])$")


@dataclass(frozen=True, order=True)
class Token:
    """One grammar symbol.

    ``kind`` is one of ``atom``, ``branch``, ``ring``, ``group``, ``pad``,
    ``bos``, ``eos``. ``order`` is the requested bond order (atom, ring and
    group tokens), ``size`` the length class of branch/ring tokens and
    ``group`` the dictionary index of a group token.
    """

    kind: str
    element: str = ""
    order: int = 1
    size: int = 0
    group: int = -1

    def __str__(self) -> str:
        if self.kind == "atom":
            return f"[{_PREFIX[self.order]}{self.element}]"
        if self.kind == "branch":
            return f"[Branch{self.size}]"
        if self.kind == "ring":
            return f"[{_PREFIX[self.order]}Ring{self.size}]"
        if self.kind == "group":
            return f"[{_PREFIX[self.order]}G{self.group}]"
        return f"[{self.kind}]"

    @property
    def special(self) -> bool:
        return self.kind in ("pad", "bos", "eos")


PAD = Token("pad")
BOS = Token("bos")
EOS = Token("eos")
SPECIALS = (PAD, BOS, EOS)


def atom(element: str, order: int = 1) -> Token:
    return Token("atom", element=element, order=order)


def branch(size: int) -> Token:
    return Token("branch", size=size)


def ring(size: int, order: int = 1) -> Token:
    return Token("ring", order=order, size=size)


def group(group_id: int, order: int = 1) -> Token:
    return Token("group", order=order, group=group_id)


ATOM_TOKENS: tuple[Token, ...] = tuple(atom(el, o) for el in ELEMENTS for o in BOND_ORDERS)
BRANCH_TOKENS: tuple[Token, ...] = tuple(branch(c) for c in LENGTH_CLASSES)
RING_TOKENS: tuple[Token, ...] = tuple(ring(c, o) for c in LENGTH_CLASSES for o in BOND_ORDERS)
BASIC_TOKENS: tuple[Token, ...] = ATOM_TOKENS + BRANCH_TOKENS + RING_TOKENS
_BASIC_INDEX = {t: k for k, t in enumerate(BASIC_TOKENS)}

# Tokens the encoder writes when it needs digit value d.
INDEX_TOKENS: tuple[Token, ...] = BASIC_TOKENS[:INDEX_BASE]


def digit(token: Token) -> int:
    """Hexadecimal digit a token stands for when read as a size index."""
    if token.kind == "group":
        return (token.group * len(BOND_ORDERS) + token.order - 1) % INDEX_BASE
    if token.special:
        return 0
    return _BASIC_INDEX[token] % INDEX_BASE


def digits_for(value: int) -> list[Token]:
    """Shortest big-endian digit run (1-3 tokens) encoding ``value``."""
    if value < 0 or value >= INDEX_BASE ** len(LENGTH_CLASSES):
        raise ValueError(f"index {value} not representable with {len(LENGTH_CLASSES)} digits")
    n = 1
    while value >= INDEX_BASE**n:
        n += 1
    out = []
    for k in reversed(range(n)):
        out.append(INDEX_TOKENS[(value // INDEX_BASE**k) % INDEX_BASE])
    return out


def parse_token(text: str) -> Token:
    if not (text.startswith("[") and text.endswith("]")):
        raise ParseError(f"token {text!r} is not bracketed")
    body = text[1:-1]
    if body in ("pad", "bos", "eos"):
        return Token(body)
    m = _BODY.match(body)
    if not m:
        raise ParseError(f"unknown token {text!r}")
    if m.group(5):
        return atom(m.group(5), _PREFIX_ORDER[m.group(4) or ""])
    prefix, name, num = m.group(1) or "", m.group(2), int(m.group(3))
    if name == "Branch":
        if prefix or num not in LENGTH_CLASSES:
            raise ParseError(f"unknown token {text!r}")
        return branch(num)
    if name == "Ring":
        if num not in LENGTH_CLASSES:
            raise ParseError(f"unknown token {text!r}")
        return ring(num, _PREFIX_ORDER[prefix])
    return group(num, _PREFIX_ORDER[prefix])


def split_tokens(line: str, lineno: int | None = None) -> list[str]:
    """Split ``[A][B]...`` into bracketed token strings without interpreting them."""
    line = line.strip()
    out = []
    pos = 0
    for m in _BRACKETED.finditer(line):
        if m.start() != pos:
            raise ParseError(f"text outside brackets at offset {pos}: {line!r}", lineno)
        out.append(m.group())
        pos = m.end()
    if pos != len(line):
        raise ParseError(f"text outside brackets at offset {pos}: {line!r}", lineno)
    if not out:
        raise ParseError("empty token string", lineno)
    return out


def parse_tokens(line: str, lineno: int | None = None) -> list[Token]:
    out = []
    for text in split_tokens(line, lineno):
        try:
            out.append(parse_token(text))
        except ParseError as exc:
            raise ParseError(str(exc), lineno) from None
    return out


def join_tokens(tokens: Iterable[Token]) -> str:
    return "".join(str(t) for t in tokens)


def strip_specials(tokens: Sequence[Token]) -> list[Token]:
    """Cut at the first eos and drop pad/bos."""
    out = []
    for t in tokens:
        if t.kind == "eos":
            break
        if t.kind in ("pad", "bos"):
            continue
        out.append(t)
    return out
