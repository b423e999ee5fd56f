"""Group dictionaries: fragment mining and the ``groupdict v1`` file format."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx

from latentmol.errors import EmptyDictionary, InvalidGraph, ParseError
from latentmol.molgraph import MolGraph, canonical_form, parse, require_valid

HEADER = "groupdict v1"


@dataclass(frozen=True)
class Fragment:
    """A dictionary entry.

    ``graph`` atoms are numbered in the order they appear in ``key``;
    ``attachments`` lists the atoms carrying an open attachment slot, in
    ascending order, one entry per slot.
    """

    key: str
    graph: MolGraph
    attachments: tuple[int, ...]
    frequency: int = 0

    @property
    def slot_counts(self) -> list[int]:
        counts = [0] * len(self.graph)
        for a in self.attachments:
            counts[a] += 1
        return counts

    @property
    def identity(self) -> tuple[str, tuple[int, ...]]:
        return (self.key, self.attachments)


@dataclass(frozen=True)
class GroupDict:
    groups: tuple[Fragment, ...]
    provenance: str = ""
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {f.identity: k for k, f in enumerate(self.groups)})

    def __len__(self) -> int:
        return len(self.groups)

    def __getitem__(self, k: int) -> Fragment:
        return self.groups[k]

    def index_of(self, fragment: Fragment) -> int:
        return self._index[fragment.identity]


def make_fragment(graph: MolGraph, slot_counts: Sequence[int], frequency: int = 0) -> Fragment:
    """Canonicalise ``graph`` with its attachment slots.

    Raises InvalidGraph if a slot has no free valence to back it.
    """
    require_valid(graph)
    for i, c in enumerate(slot_counts):
        if c > graph.slack(i):
            raise InvalidGraph(f"attachment slots on atom {i} exceed its free valence")
    key, order = canonical_form(graph, extra=list(slot_counts))
    renumbered = graph.subgraph(order)
    attachments = tuple(sorted(k for k, a in enumerate(order) for _ in range(slot_counts[a])))
    return Fragment(key=key, graph=renumbered, attachments=attachments, frequency=frequency)


def _ring_atoms_and_bridges(graph: MolGraph) -> tuple[set[int], set[tuple[int, int]]]:
    g = nx.Graph()
    g.add_nodes_from(range(len(graph)))
    g.add_edges_from(b.endpoints for b in graph.bonds)
    bridges = {(min(a, b), max(a, b)) for a, b in nx.bridges(g)}
    ring_atoms = set()
    for b in graph.bonds:
        if b.endpoints not in bridges:
            ring_atoms.update(b.endpoints)
    return ring_atoms, bridges


def cut_bonds(graph: MolGraph) -> list[tuple[int, int]]:
    """Acyclic single bonds joining ring/non-ring atoms or two inner chain atoms."""
    ring_atoms, bridges = _ring_atoms_and_bridges(graph)
    cuts = []
    for b in graph.bonds:
        if b.order != 1 or b.endpoints not in bridges:
            continue
        in_a, in_b = b.a in ring_atoms, b.b in ring_atoms
        if in_a != in_b:
            cuts.append(b.endpoints)
        elif not in_a and not in_b and graph.degree(b.a) >= 2 and graph.degree(b.b) >= 2:
            cuts.append(b.endpoints)
    return cuts


def fragment_molecule(graph: MolGraph) -> list[Fragment]:
    cuts = set(cut_bonds(graph))
    slots = [0] * len(graph)
    for a, b in cuts:
        slots[a] += 1
        slots[b] += 1
    kept = MolGraph(graph.elements, tuple(b for b in graph.bonds if b.endpoints not in cuts))
    out = []
    for comp in kept.components:
        sub = kept.subgraph(comp)
        out.append(make_fragment(sub, [slots[a] for a in comp]))
    return out


def extract_groups(
    corpus: Iterable[MolGraph],
    min_freq: int = 20,
    min_atoms: int = 3,
    provenance: str = "",
) -> GroupDict:
    corpus = list(corpus)
    if not corpus:
        raise EmptyDictionary("empty corpus")
    if min_atoms < 2:
        raise ValueError("min_atoms must be at least 2")
    counts: Counter = Counter()
    examples: dict[tuple[str, tuple[int, ...]], Fragment] = {}
    for graph in corpus:
        for frag in fragment_molecule(graph):
            if len(frag.graph) < min_atoms:
                continue
            counts[frag.identity] += 1
            examples.setdefault(frag.identity, frag)
    kept = [
        Fragment(ident[0], examples[ident].graph, ident[1], n)
        for ident, n in counts.items()
        if n >= min_freq
    ]
    if not kept:
        raise EmptyDictionary(f"no fragment with >= {min_atoms} atoms reaches frequency {min_freq}")
    kept.sort(key=lambda f: (-f.frequency, f.key, f.attachments))
    return GroupDict(tuple(kept), provenance=provenance)


def write_groupdict(path: str | Path, groups: GroupDict) -> None:
    lines = [HEADER]
    if groups.provenance:
        lines.append(f"# provenance: {groups.provenance}")
    for f in groups.groups:
        att = ",".join(str(a) for a in f.attachments) or "-"
        lines.append(f"{f.key}\t{att}\t{f.frequency}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_groupdict(path: str | Path) -> GroupDict:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ParseError(f"missing '{HEADER}' header", 1)
    provenance = ""
    groups = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("# provenance:"):
                provenance = line.split(":", 1)[1].strip()
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError("expected 3 tab-separated fields", lineno)
        key, att, freq = parts
        try:
            graph = parse(key)
            attachments = () if att.strip() == "-" else tuple(int(a) for a in att.split(","))
            frequency = int(freq)
        except (ValueError, ParseError) as exc:
            raise ParseError(str(exc), lineno) from None
        if any(a < 0 or a >= len(graph) for a in attachments):
            raise ParseError("attachment index out of range", lineno)
        groups.append(Fragment(key, graph, tuple(sorted(attachments)), frequency))
    return GroupDict(tuple(groups), provenance=provenance)
