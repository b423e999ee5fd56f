import itertools

import numpy as np
import pytest

from latentmol.codec import Vocab, encode
from latentmol.corpus import generate_corpus
from latentmol.molgraph import MolGraph


def random_graph(rng: np.random.Generator, n_max: int = 8) -> MolGraph:
    """Small valence-valid graph grown by random bonding."""
    elements = ["C", "C", "C", "N", "O", "S", "F", "Cl", "P"]
    n = int(rng.integers(1, n_max + 1))
    atoms = [str(rng.choice(elements)) for _ in range(n)]
    from latentmol.molgraph import MAX_VALENCE

    used = [0] * n
    bonds = {}
    for a, b in itertools.combinations(range(n), 2):
        if rng.random() < 0.35:
            order = int(rng.integers(1, 4))
            order = min(order, MAX_VALENCE[atoms[a]] - used[a], MAX_VALENCE[atoms[b]] - used[b])
            if order > 0:
                bonds[(a, b)] = order
                used[a] += order
                used[b] += order
    return MolGraph.from_bonds(atoms, [(a, b, o) for (a, b), o in bonds.items()])


@pytest.fixture(scope="session")
def small_corpus():
    graphs = generate_corpus(40, seed=11)
    seqs = [[str(t) for t in encode(g)] for g in graphs]
    return graphs, seqs, Vocab.build(seqs)


# one line per acceptance criterion, printed after the test summary
ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
