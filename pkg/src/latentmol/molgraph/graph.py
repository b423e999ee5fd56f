from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

from latentmol.errors import InvalidGraph

# Maximum bonding capacity per element. Hydrogens are implicit and fill the
# remaining slack; there are no charges, radicals or aromatic atoms.
MAX_VALENCE: dict[str, int] = {
    "C": 4,
    "N": 3,
    "O": 2,
    "F": 1,
    "S": 6,
    "P": 5,
    "Cl": 1,
    "Br": 1,
    "I": 1,
}
ELEMENTS: tuple[str, ...] = tuple(MAX_VALENCE)
BOND_ORDERS = (1, 2, 3)


@dataclass(frozen=True)
class Atom:
    element: str
    implicit_h: int


@dataclass(frozen=True, order=True)
class Bond:
    a: int
    b: int
    order: int = 1

    def __post_init__(self):
        if self.a > self.b:
            lo, hi = self.b, self.a
            object.__setattr__(self, "a", lo)
            object.__setattr__(self, "b", hi)

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.a, self.b)

    def other(self, i: int) -> int:
        return self.b if i == self.a else self.a


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    slack: tuple[int, ...]
    implicit_h: tuple[int, ...]
    violations: tuple[str, ...] = ()


@dataclass(frozen=True)
class Descriptors:
    heavy_atoms: int
    ring_count: int
    branch_index: int


@dataclass(frozen=True, eq=False)
class MolGraph:
    """Immutable molecular graph over heavy atoms.

    ``elements[i]`` is the symbol of atom ``i``; bonds are stored with
    ``a < b``. Structural problems (unknown element, self loops, duplicate
    pairs, indices out of range) are rejected at construction; valence and
    bond-order problems are left for :func:`validate` to report.
    """

    elements: tuple[str, ...]
    bonds: tuple[Bond, ...] = field(default=())

    def __post_init__(self):
        elements = tuple(self.elements)
        bonds = tuple(b if isinstance(b, Bond) else Bond(*b) for b in self.bonds)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "bonds", bonds)
        n = len(elements)
        for el in elements:
            if el not in MAX_VALENCE:
                raise InvalidGraph(f"unsupported element {el!r}")
        seen = set()
        for bond in bonds:
            if bond.a == bond.b:
                raise InvalidGraph(f"self bond on atom {bond.a}")
            if bond.a < 0 or bond.b >= n:
                raise InvalidGraph(f"bond {bond.endpoints} out of range for {n} atoms")
            if bond.endpoints in seen:
                raise InvalidGraph(f"duplicate bond between atoms {bond.endpoints}")
            seen.add(bond.endpoints)

    @classmethod
    def from_bonds(cls, elements: Iterable[str], bonds: Iterable[tuple[int, int, int]] = ()) -> "MolGraph":
        return cls(tuple(elements), tuple(Bond(a, b, o) for a, b, o in bonds))

    def __len__(self) -> int:
        return len(self.elements)

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """``neighbors[i]`` is a tuple of ``(j, order)`` pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.elements]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        return tuple(tuple(sorted(row)) for row in adj)

    @cached_property
    def bond_order_sums(self) -> tuple[int, ...]:
        return tuple(sum(o for _, o in row) for row in self.neighbors)

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def slack(self, i: int) -> int:
        return MAX_VALENCE[self.elements[i]] - self.bond_order_sums[i]

    @property
    def atoms(self) -> tuple[Atom, ...]:
        return tuple(Atom(el, max(0, self.slack(i))) for i, el in enumerate(self.elements))

    def bond_lookup(self) -> dict[tuple[int, int], int]:
        return {b.endpoints: b.order for b in self.bonds}

    @cached_property
    def components(self) -> tuple[tuple[int, ...], ...]:
        """Connected components, each sorted, ordered by smallest member."""
        parent = list(range(len(self.elements)))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for bond in self.bonds:
            ra, rb = find(bond.a), find(bond.b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, list[int]] = {}
        for i in range(len(self.elements)):
            groups.setdefault(find(i), []).append(i)
        return tuple(tuple(g) for _, g in sorted(groups.items()))

    def is_connected(self) -> bool:
        return len(self.components) <= 1

    def permuted(self, perm: Sequence[int]) -> "MolGraph":
        """Relabel atom ``i`` as ``perm[i]``."""
        elements = [""] * len(self.elements)
        for i, el in enumerate(self.elements):
            elements[perm[i]] = el
        return MolGraph(tuple(elements), tuple(Bond(perm[b.a], perm[b.b], b.order) for b in self.bonds))

    def subgraph(self, atoms: Sequence[int]) -> "MolGraph":
        """Induced subgraph; atoms are renumbered in the given order."""
        index = {a: k for k, a in enumerate(atoms)}
        bonds = [
            Bond(index[b.a], index[b.b], b.order)
            for b in self.bonds
            if b.a in index and b.b in index
        ]
        return MolGraph(tuple(self.elements[a] for a in atoms), tuple(sorted(bonds)))

    def largest_component(self) -> "MolGraph":
        if self.is_connected():
            return self
        best = max(self.components, key=lambda c: (len(c), -c[0]))
        return self.subgraph(best)

    def __repr__(self) -> str:
        from latentmol.molgraph.notation import to_string

        try:
            return f"MolGraph({to_string(self)!r})"
        except InvalidGraph:
            return f"MolGraph(elements={self.elements!r}, bonds={self.bonds!r})"


def validate(graph: MolGraph) -> ValidityReport:
    violations = []
    for bond in graph.bonds:
        if bond.order not in BOND_ORDERS:
            violations.append(f"bond {bond.endpoints} has order {bond.order} outside {{1,2,3}}")
    slack = tuple(graph.slack(i) for i in range(len(graph)))
    for i, s in enumerate(slack):
        if s < 0:
            violations.append(
                f"atom {i} ({graph.elements[i]}) exceeds valence {MAX_VALENCE[graph.elements[i]]} by {-s}"
            )
    return ValidityReport(
        valid=not violations,
        slack=slack,
        implicit_h=tuple(max(0, s) for s in slack),
        violations=tuple(violations),
    )


def require_valid(graph: MolGraph) -> None:
    report = validate(graph)
    if not report.valid:
        raise InvalidGraph("; ".join(report.violations))


def descriptors(graph: MolGraph) -> Descriptors:
    require_valid(graph)
    n = len(graph)
    return Descriptors(
        heavy_atoms=n,
        ring_count=len(graph.bonds) - n + len(graph.components),
        branch_index=sum(1 for i in range(n) if graph.degree(i) >= 3),
    )
