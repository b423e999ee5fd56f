from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from latentmol.codec.groups import GroupDict
from latentmol.codec.tokens import Token, atom, branch, digits_for, group, ring
from latentmol.errors import InvalidGraph, UnencodableGraph
from latentmol.molgraph import MolGraph, canonical_ranking, require_valid


@dataclass
class Match:
    group_id: int
    atoms: tuple[int, ...]  # molecule atom for each fragment atom
    slots: tuple[int, ...]  # molecule atom for each attachment slot, in slot order


class _Conflict(Exception):
    def __init__(self, match: Match):
        self.match = match


def _search_order(frag: MolGraph) -> list[tuple[int, int, int]]:
    """BFS order over a connected fragment as (atom, parent, bond order) triples."""
    order = [(0, -1, 0)]
    seen = {0}
    k = 0
    while k < len(order):
        a = order[k][0]
        for j, o in frag.neighbors[a]:
            if j not in seen:
                seen.add(j)
                order.append((j, a, o))
        k += 1
    return order


def _embeddings(graph: MolGraph, frag: MolGraph, slots_at: list[int], used: set[int]):
    """Induced placements of ``frag`` whose atoms carry exactly their slot count of outside bonds."""
    plan = _search_order(frag)
    if len(plan) != len(frag):
        return
    frag_bonds = frag.bond_lookup()
    mol_bonds = graph.bond_lookup()
    need_degree = [frag.degree(k) + slots_at[k] for k in range(len(frag))]
    mapping = [-1] * len(frag)
    placed: list[int] = []

    def fits(k: int, a: int) -> bool:
        if a in used or a in placed or graph.elements[a] != frag.elements[k]:
            return False
        if graph.degree(a) != need_degree[k]:
            return False
        for f in range(len(frag)):
            m = mapping[f]
            if m < 0:
                continue
            want = frag_bonds.get((min(f, k), max(f, k)), 0)
            if mol_bonds.get((min(m, a), max(m, a)), 0) != want:
                return False
        return True

    def extend(depth: int):
        if depth == len(plan):
            yield tuple(mapping)
            return
        k, parent, _ = plan[depth]
        if parent < 0:
            candidates = range(len(graph))
        else:
            candidates = [j for j, _ in graph.neighbors[mapping[parent]]]
        for a in candidates:
            if fits(k, a):
                mapping[k] = a
                placed.append(a)
                yield from extend(depth + 1)
                placed.pop()
                mapping[k] = -1

    yield from extend(0)


def find_matches(graph: MolGraph, groups: GroupDict, rank: list[int]) -> list[Match]:
    """Greedy non-overlapping fragment matches, largest fragments first.

    A placement counts only if every bond leaving it starts at an attachment
    slot, with exactly as many external bonds per atom as the fragment has
    slots there. Among placements of one fragment the one covering the
    lowest-ranked atoms wins.
    """
    mol_elements = Counter(graph.elements)
    used: set[int] = set()
    chosen: list[Match] = []
    for gid in sorted(range(len(groups)), key=lambda k: (-len(groups[k].graph), k)):
        frag = groups[gid]
        if len(frag.graph) > len(graph) - len(used) or Counter(frag.graph.elements) - mol_elements:
            continue
        candidates = []
        for atoms in _embeddings(graph, frag.graph, frag.slot_counts, used):
            key = (tuple(sorted(rank[a] for a in atoms)), tuple(rank[a] for a in atoms))
            candidates.append((key, atoms))
        candidates.sort()
        for _, atoms in candidates:
            if used.intersection(atoms):
                continue
            used.update(atoms)
            chosen.append(Match(gid, atoms, tuple(atoms[a] for a in frag.attachments)))
    return chosen


@dataclass(frozen=True)
class _Edge:
    own: int
    other: int
    order: int


class _Writer:
    def __init__(self, graph: MolGraph, rank: list[int], matches: list[Match]):
        self.graph = graph
        self.rank = rank
        self.matches = matches
        n = len(graph)
        # node ids: atoms keep their index, match k becomes n + k
        self.node_of = list(range(n))
        for k, m in enumerate(matches):
            for a in m.atoms:
                self.node_of[a] = n + k
        self.adj: dict[int, list[_Edge]] = {}
        for b in graph.bonds:
            na, nb = self.node_of[b.a], self.node_of[b.b]
            if na == nb:
                continue
            self.adj.setdefault(na, []).append(_Edge(b.a, b.b, b.order))
            self.adj.setdefault(nb, []).append(_Edge(b.b, b.a, b.order))
        self.children: dict[int, list[_Edge]] = {}
        self.closures: dict[int, list[_Edge]] = {}
        self.created: dict[int, int] = {}
        self.counter = 0

    def _match(self, node: int) -> Match | None:
        n = len(self.graph)
        return self.matches[node - n] if node >= n else None

    def _sort_key(self, node: int, e: _Edge):
        m = self._match(node)
        slot = m.slots.index(e.own) if m is not None else 0
        return (slot, self.rank[e.other])

    def _tree(self, root: int) -> None:
        state = {root: 1}
        stack = [(root, None, iter(sorted(self.adj.get(root, []), key=lambda e: self._sort_key(root, e))))]
        while stack:
            node, parent_edge, it = stack[-1]
            for e in it:
                if parent_edge is not None and e.own == parent_edge.other and e.other == parent_edge.own:
                    continue
                other = self.node_of[e.other]
                st = state.get(other, 0)
                if st == 0:
                    state[other] = 1
                    self.children.setdefault(node, []).append(e)
                    edges = sorted(self.adj.get(other, []), key=lambda x, o=other: self._sort_key(o, x))
                    stack.append((other, e, iter(edges)))
                    break
                if st == 1:
                    self.closures.setdefault(node, []).append(e)
            else:
                state[node] = 2
                stack.pop()

    def _emit(self, node: int, parent_edge: _Edge | None) -> list[Token]:
        order = parent_edge.order if parent_edge is not None else 1
        m = self._match(node)
        if m is None:
            out = [atom(self.graph.elements[node], order)]
            self.created[node] = self.counter
            self.counter += 1
            items = [("ring", e) for e in self.closures.get(node, [])]
            items += [("child", e) for e in self.children.get(node, [])]
        else:
            out = [group(m.group_id, order)]
            for a in m.atoms:
                self.created[a] = self.counter
                self.counter += 1
            items = self._route(node, m, parent_edge)
        for k, (kind, e) in enumerate(items):
            if kind == "ring":
                anchor = self.created[e.own]
                q = anchor - 1 - self.created[e.other]
                digits = digits_for(q)
                out.append(ring(len(digits), e.order))
                out.extend(digits)
            else:
                body = self._emit(self.node_of[e.other], e)
                if k == len(items) - 1:
                    out.extend(body)
                else:
                    digits = digits_for(len(body) - 1)
                    out.append(branch(len(digits)))
                    out.extend(digits)
                    out.extend(body)
        return out

    def _route(self, node: int, m: Match, parent_edge: _Edge | None) -> list[tuple[str, _Edge]]:
        """Order a group's outgoing bonds so they meet its slots in sequence."""
        pending = [("ring", e) for e in self.closures.get(node, [])]
        pending += [("child", e) for e in self.children.get(node, [])]
        pos = 0
        if parent_edge is not None:
            if not m.slots or m.slots[0] != parent_edge.other:
                raise _Conflict(m)
            pos = 1
        routed = []
        while pending:
            if pos >= len(m.slots):
                raise _Conflict(m)
            want = m.slots[pos]
            pick = next((it for it in pending if it[1].own == want), None)
            if pick is None:
                raise _Conflict(m)
            pending.remove(pick)
            routed.append(pick)
            pos += 1
        return routed

    def tokens(self) -> list[Token]:
        if len(self.graph) == 0:
            return []
        root = self.node_of[min(range(len(self.graph)), key=lambda i: self.rank[i])]
        self._tree(root)
        return self._emit(root, None)


def encode(graph: MolGraph, groups: GroupDict | None = None, max_len: int | None = None) -> list[Token]:
    """Serialise a connected valid graph; decoding the result recovers it.

    With a dictionary, matched fragments become group tokens. A placement
    that cannot be routed through its slots from the chosen traversal is
    written atom by atom instead.
    """
    require_valid(graph)
    if not graph.is_connected():
        raise InvalidGraph("encoder input must be connected")
    rank = canonical_ranking(graph)
    matches = find_matches(graph, groups, rank) if groups is not None and len(groups) else []
    while True:
        try:
            tokens = _Writer(graph, rank, matches).tokens()
            break
        except _Conflict as conflict:
            matches = [m for m in matches if m is not conflict.match]
    if max_len is not None and len(tokens) > max_len:
        raise UnencodableGraph(f"{len(tokens)} tokens exceed max_len {max_len}")
    return tokens
