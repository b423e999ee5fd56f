"""Canonical atom ranking.

Colour refinement (Morgan-style) seeded with element, degree and valence use,
followed by individualization-refinement over any tied cells. Each leaf of
the search yields a discrete ranking and a certificate (the graph rewritten
in rank order); the smallest certificate wins. Leaves with equal
certificates expose automorphisms, which are used to skip branches that are
images of ones already explored.
"""

from __future__ import annotations

from typing import Sequence

from latentmol.molgraph.graph import ELEMENTS, MolGraph

_ELEMENT_INDEX = {el: k for k, el in enumerate(ELEMENTS)}

Certificate = tuple


def _relabel(signatures: Sequence) -> list[int]:
    order = {sig: k for k, sig in enumerate(sorted(set(signatures)))}
    return [order[s] for s in signatures]


def refine(graph: MolGraph, colors: Sequence[int]) -> list[int]:
    """Iterate neighbour-multiset refinement until the partition is stable."""
    colors = list(colors)
    n_cells = len(set(colors))
    nbrs = graph.neighbors
    while True:
        sigs = [
            (colors[i], tuple(sorted((colors[j], o) for j, o in nbrs[i])))
            for i in range(len(colors))
        ]
        new = _relabel(sigs)
        new_cells = len(set(new))
        if new_cells == n_cells:
            return new
        colors, n_cells = new, new_cells


def initial_colors(graph: MolGraph, extra: Sequence[int] | None = None) -> list[int]:
    sigs = []
    for i, el in enumerate(graph.elements):
        sigs.append(
            (
                _ELEMENT_INDEX[el],
                graph.degree(i),
                graph.bond_order_sums[i],
                0 if extra is None else extra[i],
            )
        )
    return _relabel(sigs)


def _individualize(colors: list[int], v: int) -> list[int]:
    c = colors[v]
    out = []
    for i, col in enumerate(colors):
        if i == v:
            out.append(c)
        elif col >= c:
            out.append(col + 1)
        else:
            out.append(col)
    return out


def _certificate(graph: MolGraph, rank: Sequence[int], extra: Sequence[int] | None) -> Certificate:
    n = len(rank)
    inv = [0] * n
    for i, r in enumerate(rank):
        inv[r] = i
    elements = tuple(_ELEMENT_INDEX[graph.elements[inv[r]]] for r in range(n))
    bonds = tuple(sorted((min(rank[b.a], rank[b.b]), max(rank[b.a], rank[b.b]), b.order) for b in graph.bonds))
    marks = () if extra is None else tuple(extra[inv[r]] for r in range(n))
    return (elements, marks, bonds)


class _Search:
    def __init__(self, graph: MolGraph, extra: Sequence[int] | None):
        self.graph = graph
        self.extra = extra
        self.best_cert: Certificate | None = None
        self.best_rank: list[int] | None = None
        self.automorphisms: list[list[int]] = []

    def run(self, colors: list[int], prefix: tuple[int, ...]) -> None:
        colors = refine(self.graph, colors)
        n = len(colors)
        if len(set(colors)) == n:
            self._leaf(colors)
            return
        cells: dict[int, list[int]] = {}
        for i, c in enumerate(colors):
            cells.setdefault(c, []).append(i)
        target = next(cells[c] for c in sorted(cells) if len(cells[c]) > 1)
        explored: list[int] = []
        for v in target:
            if explored and self._equivalent(v, explored, prefix):
                continue
            explored.append(v)
            self.run(_individualize(colors, v), prefix + (v,))

    def _leaf(self, rank: list[int]) -> None:
        cert = _certificate(self.graph, rank, self.extra)
        if self.best_cert is None or cert < self.best_cert:
            self.best_cert, self.best_rank = cert, rank
        elif cert == self.best_cert:
            # atom i in this leaf plays the role of atom gamma[i] in the best leaf
            inv_best = [0] * len(rank)
            for i, r in enumerate(self.best_rank):
                inv_best[r] = i
            gamma = [inv_best[rank[i]] for i in range(len(rank))]
            if any(g != i for i, g in enumerate(gamma)):
                self.automorphisms.append(gamma)

    def _equivalent(self, v: int, explored: list[int], prefix: tuple[int, ...]) -> bool:
        gens = [g for g in self.automorphisms if all(g[p] == p for p in prefix)]
        if not gens:
            return False
        parent = list(range(len(self.graph)))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for g in gens:
            for i, gi in enumerate(g):
                ri, rj = find(i), find(gi)
                if ri != rj:
                    parent[ri] = rj
        root = find(v)
        return any(find(u) == root for u in explored)


def canonical_ranking(graph: MolGraph, extra: Sequence[int] | None = None) -> list[int]:
    """Return ``rank[i]`` for every atom; equal for isomorphic inputs up to automorphism."""
    if len(graph) == 0:
        return []
    search = _Search(graph, extra)
    search.run(initial_colors(graph, extra), ())
    return search.best_rank
