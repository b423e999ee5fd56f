"""SMILES-like linear notation for :class:`MolGraph`.

The subset is: element symbols, ``=``/``#`` bond orders, ring-closure digits
(``%nn`` above 9), parenthesised branches and ``.`` between components.
Hydrogens are never written; they follow from the valence table.
"""

from __future__ import annotations

import re
from typing import Sequence

from latentmol.errors import ParseError
from latentmol.molgraph.canon import canonical_ranking
from latentmol.molgraph.graph import Bond, MolGraph, require_valid

_BOND_SYMBOL = {1: "", 2: "=", 3: "#"}
_SYMBOL_BOND = {"": 1, "-": 1, "=": 2, "#": 3}
_TOKEN = re.compile(r"Cl|Br|[CNOFSPI]|[-=#]|%\d\d|\d|\(|\)|\.")


def _ring_label(d: int) -> str:
    return str(d) if d < 10 else f"%{d:02d}"


def write(graph: MolGraph, rank: Sequence[int]) -> tuple[str, list[int]]:
    """Depth-first serialisation visiting neighbours in ``rank`` order.

    Returns the string and the atom indices in order of appearance.
    """
    n = len(graph)
    nbrs = [sorted(graph.neighbors[i], key=lambda jo: rank[jo[0]]) for i in range(n)]
    visited = [False] * n
    parent = [-1] * n
    children: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    ring_bonds: list[tuple[int, int, int]] = []  # (earlier, later, order)
    order: list[int] = []
    seen_at: dict[int, int] = {}

    starts = sorted(range(n), key=lambda i: rank[i])
    for start in starts:
        if visited[start]:
            continue
        # iterative DFS that mirrors recursive visiting order
        stack = [(start, iter(nbrs[start]))]
        visited[start] = True
        seen_at[start] = len(order)
        order.append(start)
        while stack:
            atom, it = stack[-1]
            advanced = False
            for j, o in it:
                if j == parent[atom]:
                    continue
                if visited[j]:
                    if seen_at[j] < seen_at[atom]:
                        ring_bonds.append((j, atom, o))
                    continue
                visited[j] = True
                parent[j] = atom
                children[atom].append((j, o))
                seen_at[j] = len(order)
                order.append(j)
                stack.append((j, iter(nbrs[j])))
                advanced = True
                break
            if not advanced:
                stack.pop()

    position = {a: k for k, a in enumerate(order)}
    opening: dict[int, list[tuple[int, int, int]]] = {}
    closing: dict[int, list[tuple[int, int, int]]] = {}
    for rb in sorted(ring_bonds, key=lambda t: (position[t[0]], position[t[1]])):
        opening.setdefault(rb[0], []).append(rb)
        closing.setdefault(rb[1], []).append(rb)

    free: list[int] = []
    next_label = 1
    label_of: dict[tuple[int, int, int], int] = {}
    out: list[str] = []

    def emit(atom: int) -> None:
        nonlocal next_label
        out.append(graph.elements[atom])
        for rb in closing.get(atom, []):
            label = label_of.pop(rb)
            out.append(_BOND_SYMBOL[rb[2]] + _ring_label(label))
            free.append(label)
            free.sort()
        for rb in opening.get(atom, []):
            if free:
                label = free.pop(0)
            else:
                label, next_label = next_label, next_label + 1
            label_of[rb] = label
            out.append(_BOND_SYMBOL[rb[2]] + _ring_label(label))
        kids = children[atom]
        for k, (child, o) in enumerate(kids):
            branch = k < len(kids) - 1
            if branch:
                out.append("(")
            out.append(_BOND_SYMBOL[o])
            emit(child)
            if branch:
                out.append(")")

    first = True
    for atom in order:
        if parent[atom] == -1:
            if not first:
                out.append(".")
            first = False
            emit(atom)
    return "".join(out), order


def to_string(graph: MolGraph, extra: Sequence[int] | None = None) -> str:
    return canonical_form(graph, extra)[0]


def canonical_form(graph: MolGraph, extra: Sequence[int] | None = None) -> tuple[str, list[int]]:
    """Canonical string plus the atom order it was written in."""
    require_valid(graph)
    rank = canonical_ranking(graph, extra)
    return write(graph, rank)


def canonical_string(graph: MolGraph) -> str:
    """Deterministic notation, identical for all atom orderings of a graph."""
    return canonical_form(graph)[0]


def parse(text: str) -> MolGraph:
    """Parse the notation written by :func:`write` (atoms keep appearance order)."""
    pos = 0
    elements: list[str] = []
    bonds: dict[tuple[int, int], int] = {}
    stack: list[int] = []
    prev: int | None = None
    pending = ""
    rings: dict[str, tuple[int, str]] = {}
    for m in _TOKEN.finditer(text):
        if m.start() != pos:
            raise ParseError(f"unexpected character {text[pos]!r} at offset {pos} in {text!r}")
        pos = m.end()
        tok = m.group()
        if tok in ("-", "=", "#"):
            pending = tok
        elif tok == "(":
            if prev is None:
                raise ParseError(f"branch without an atom in {text!r}")
            stack.append(prev)
        elif tok == ")":
            if not stack:
                raise ParseError(f"unbalanced ')' in {text!r}")
            prev = stack.pop()
        elif tok == ".":
            prev = None
        elif tok[0].isdigit() or tok[0] == "%":
            if prev is None:
                raise ParseError(f"ring label without an atom in {text!r}")
            if tok in rings:
                other, sym = rings.pop(tok)
                if sym and pending and sym != pending:
                    raise ParseError(f"conflicting ring bond orders for {tok} in {text!r}")
                key = (min(other, prev), max(other, prev))
                bonds[key] = _SYMBOL_BOND[sym or pending]
            else:
                rings[tok] = (prev, pending)
            pending = ""
        else:
            elements.append(tok)
            idx = len(elements) - 1
            if prev is not None:
                bonds[(prev, idx)] = _SYMBOL_BOND[pending]
            prev = idx
            pending = ""
    if pos != len(text):
        raise ParseError(f"unexpected character {text[pos]!r} at offset {pos} in {text!r}")
    if rings or stack:
        raise ParseError(f"unclosed ring or branch in {text!r}")
    return MolGraph(tuple(elements), tuple(Bond(a, b, o) for (a, b), o in sorted(bonds.items())))
