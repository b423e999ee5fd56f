"""Total decoder from token sequences to valence-valid graphs.

Derivation walks the tokens left to right keeping a *current* node: the
last atom placed on the active chain, or a spliced group instance. Every
bond request is clipped to the free valence of both endpoints; a request
that clips to zero is dropped, leaving the new atom unbonded.

* ``[=X]``      add atom X, bond it to the current node, X becomes current.
* ``[BranchC]`` read C digit tokens as Q, then derive the next
  ``Q mod remaining + 1`` tokens as a side chain rooted at the current node.
* ``[=RingC]``  read C digit tokens as Q and bond the current anchor to the
  atom ``Q mod anchor + 1`` places before it.
* ``[=Gk]``     splice fragment k; bonds to and from the instance go to its
  attachment slots in order (the last slot is reused once all are spent).
"""

from __future__ import annotations

from typing import Sequence

from latentmol.codec.groups import GroupDict
from latentmol.codec.tokens import INDEX_BASE, Token, digit, strip_specials
from latentmol.molgraph import MAX_VALENCE, Bond, MolGraph


class _Instance:
    __slots__ = ("atoms", "slots", "cursor")

    def __init__(self, atoms: list[int], slots: list[int]):
        self.atoms = atoms
        self.slots = slots
        self.cursor = 0


class _Builder:
    def __init__(self, groups: GroupDict | None):
        self.groups = groups
        self.elements: list[str] = []
        self.used: list[int] = []
        self.bonds: dict[tuple[int, int], int] = {}

    def slack(self, i: int) -> int:
        return MAX_VALENCE[self.elements[i]] - self.used[i]

    def add_atom(self, element: str) -> int:
        self.elements.append(element)
        self.used.append(0)
        return len(self.elements) - 1

    def anchor(self, node) -> int:
        if isinstance(node, int):
            return node
        if node.cursor < len(node.slots):
            a = node.slots[node.cursor]
            node.cursor += 1
            return a
        return node.slots[-1] if node.slots else node.atoms[0]

    def bond(self, a: int, b: int, order: int) -> None:
        if a == b:
            return
        key = (min(a, b), max(a, b))
        existing = self.bonds.get(key, 0)
        order = min(order, self.slack(a), self.slack(b), 3 - existing)
        if order <= 0:
            return
        self.bonds[key] = existing + order
        self.used[a] += order
        self.used[b] += order

    def splice(self, group_id: int) -> _Instance | None:
        if self.groups is None or not 0 <= group_id < len(self.groups):
            return None
        frag = self.groups[group_id]
        offset = len(self.elements)
        for el in frag.graph.elements:
            self.add_atom(el)
        for b in frag.graph.bonds:
            self.bond(offset + b.a, offset + b.b, b.order)
        atoms = list(range(offset, offset + len(frag.graph)))
        return _Instance(atoms, [offset + a for a in frag.attachments])

    def graph(self) -> MolGraph:
        return MolGraph(
            tuple(self.elements),
            tuple(Bond(a, b, o) for (a, b), o in sorted(self.bonds.items())),
        )


def _read_index(tokens: Sequence[Token], start: int, size: int, end: int) -> tuple[int, int]:
    stop = min(start + size, end)
    q = 0
    for t in tokens[start:stop]:
        q = q * INDEX_BASE + digit(t)
    return q, stop


def _derive(b: _Builder, tokens: Sequence[Token], start: int, end: int, current) -> None:
    i = start
    while i < end:
        t = tokens[i]
        kind = t.kind
        if kind == "atom":
            new = b.add_atom(t.element)
            if current is not None:
                b.bond(b.anchor(current), new, t.order)
            current = new
            i += 1
        elif kind == "group":
            inst = b.splice(t.group)
            i += 1
            if inst is None:
                continue
            if current is not None:
                src = b.anchor(current)
                b.bond(src, b.anchor(inst), t.order)
            current = inst
        elif kind == "branch":
            q, i = _read_index(tokens, i + 1, t.size, end)
            remaining = end - i
            if remaining <= 0:
                break
            length = q % remaining + 1
            _derive(b, tokens, i, i + length, current)
            i += length
        elif kind == "ring":
            q, i = _read_index(tokens, i + 1, t.size, end)
            if current is None:
                continue
            a = b.anchor(current)
            if a == 0:
                continue
            target = a - 1 - (q % a)
            b.bond(a, target, t.order)
        else:
            i += 1


def decode(tokens: Sequence[Token], groups: GroupDict | None = None) -> MolGraph:
    """Decode any token sequence into a valid graph (possibly disconnected).

    Tokens after the first eos are ignored, pad/bos are skipped, and group
    tokens with no matching dictionary entry are ignored.
    """
    body = strip_specials(tokens)
    builder = _Builder(groups)
    _derive(builder, body, 0, len(body), None)
    return builder.graph()
