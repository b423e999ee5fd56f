"""Multi-start latent optimisation against a surrogate, then decode and rank.

Starts are processed in fixed-size chunks, so the floating-point work done
for a start never depends on how many workers share the chunks.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from latentmol.codec import decode
from latentmol.codec.vocab import Vocab
from latentmol.models.vae import SequenceVAE
from latentmol.molgraph import MolGraph, canonical_string
from latentmol.oracles import Objective, OracleHub, objective_value
from latentmol.surrogate import Surrogate
from latentmol.tensor import core as T
from latentmol.tensor.core import Tensor
from latentmol.tensor.rng import normal

CHUNK = 64


@dataclass
class StartResult:
    index: int
    z0: np.ndarray
    z_final: np.ndarray
    trajectory: list[float]
    molecule: str
    graph: MolGraph
    surrogate: dict[str, float]
    diverged: bool = False
    oracle: dict[str, float] = field(default_factory=dict)
    objective_oracle: float = float("nan")

    @property
    def objective_surrogate(self) -> float:
        return self.trajectory[-1]


def start_point(seed: int, index: int, dim: int) -> np.ndarray:
    return normal(seed, (dim,), "start", index)


def descend(surrogate: Surrogate, coef: np.ndarray, z0: np.ndarray, steps: int, lr: float):
    """Plain gradient descent on ``predict(z) @ coef`` for a block of starts.

    ``surrogate`` only needs a differentiable ``predict``. Returns final points, per-start objective trajectories and a diverged flag
    per start. A start whose gradient turns non-finite stops where it was.
    """
    z = np.array(z0, dtype=np.float32)
    c = Tensor(coef.astype(np.float32)[:, None])
    alive = np.ones(len(z), dtype=bool)
    traj = np.zeros((len(z), steps + 1))
    for step in range(steps + 1):
        zt = Tensor(z, requires_grad=True)
        f = T.matmul(surrogate.predict(zt), c)
        traj[:, step] = np.where(alive, f.data[:, 0], traj[:, max(step - 1, 0)])
        if step == steps:
            break
        T.backward(T.sum(f))
        g = zt.grad
        bad = ~np.all(np.isfinite(g), axis=1) | ~np.isfinite(f.data[:, 0])
        alive &= ~bad
        z = np.where(alive[:, None], z - np.float32(lr) * g, z).astype(np.float32)
    return z, traj, ~alive


def _run_chunk(model, vocab, surrogate, coef, seed, indices, steps, lr, iterations):
    d = model.config.latent_dim
    z0 = np.stack([start_point(seed, i, d) for i in indices])
    z, traj, diverged = descend(surrogate.frozen(), coef, z0, steps, lr)
    preds = surrogate.predict_numpy(z)
    out = []
    for k, ids in enumerate(model.generate(z, iterations)):
        graph = decode(vocab.to_tokens(ids))
        out.append(
            StartResult(
                index=int(indices[k]),
                z0=z0[k],
                z_final=z[k],
                trajectory=[float(x) for x in traj[k]],
                molecule=canonical_string(graph) if len(graph) else "",
                graph=graph,
                surrogate={n: float(preds[k, j]) for j, n in enumerate(surrogate.names)},
                diverged=bool(diverged[k]),
            )
        )
    return out


def optimize(
    model: SequenceVAE,
    vocab: Vocab,
    surrogate: Surrogate,
    objective: Objective,
    n_starts: int = 10_000,
    steps: int = 50,
    lr: float = 0.1,
    seed: int = 0,
    workers: int = 1,
    iterations: int = 10,
) -> list[StartResult]:
    """Descend from ``n_starts`` prior samples and decode every end point."""
    coef = objective.coefficients(surrogate.names)
    chunks = [list(range(s, min(s + CHUNK, n_starts))) for s in range(0, n_starts, CHUNK)]

    def job(indices):
        return _run_chunk(model, vocab, surrogate, coef, seed, indices, steps, lr, iterations)

    if workers <= 1 or len(chunks) <= 1:
        parts = [job(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
    results = [r for part in parts for r in part]
    results.sort(key=lambda r: r.index)
    return results


def score_results(results: Sequence[StartResult], hub: OracleHub, objective: Objective) -> dict[str, int]:
    """Attach oracle properties and objective to each result; returns failure tallies."""
    scores = hub.score([r.graph for r in results])
    for k, r in enumerate(results):
        r.oracle = {name: float(v[k]) for name, v in scores.values.items()}
        r.objective_oracle = float(objective_value(r.oracle, objective))
    return scores.failures


@dataclass
class Selection:
    tables: dict[str, list[StartResult]]
    means: dict[str, float]
    count: int


def rank_and_select(results: Sequence[StartResult], objective: Objective, top_k: int = 100) -> Selection:
    """Top ``top_k`` distinct molecules per objective term and for the objective.

    Ties go to the smaller canonical string, then the smaller start index.
    """
    scored = [r for r in results if r.oracle]
    tables: dict[str, list[StartResult]] = {}
    criteria = [(t.name, t.sign) for t in objective.terms] + [("objective", 1.0)]
    for name, sign in criteria:
        if name == "objective":
            key = lambda r: (r.objective_oracle, r.molecule, r.index)  # noqa: E731
        else:
            key = lambda r, n=name, s=sign: (s * r.oracle[n], r.molecule, r.index)  # noqa: E731
        seen: set[str] = set()
        table = []
        for r in sorted(scored, key=key):
            if r.molecule in seen:
                continue
            seen.add(r.molecule)
            table.append(r)
            if len(table) == top_k:
                break
        tables[name] = table
    names = sorted({n for r in scored for n in r.oracle})
    means = {n: float(np.mean([r.oracle[n] for r in scored])) if scored else float("nan") for n in names}
    if scored:
        means["objective"] = float(np.mean([r.objective_oracle for r in scored]))
    return Selection(tables, means, len(scored))


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else "nan"


def write_results(path: str | Path, results: Sequence[StartResult]) -> None:
    names = sorted({n for r in results for n in r.oracle})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start_index", "molecule", "objective_surrogate", "objective_oracle"] + [f"prop:{n}" for n in names])
        for r in results:
            w.writerow(
                [r.index, r.molecule, _fmt(r.objective_surrogate), _fmt(r.objective_oracle)]
                + [_fmt(r.oracle.get(n, float("nan"))) for n in names]
            )


def write_summary(path: str | Path, selection: Selection) -> None:
    names = [n for n in selection.means if n != "objective"] + (["objective"] if "objective" in selection.means else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["count"] + [f"mean_{n}" for n in names])
        w.writerow([selection.count] + [_fmt(selection.means[n]) for n in names])


def write_tables(directory: str | Path, selection: Selection) -> list[Path]:
    paths = []
    for name, table in selection.tables.items():
        path = Path(directory) / f"top_{name}.csv"
        prop_names = sorted({n for r in table for n in r.oracle})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "start_index", "molecule", "objective_oracle"] + [f"prop:{n}" for n in prop_names])
            for k, r in enumerate(table, start=1):
                w.writerow([k, r.index, r.molecule, _fmt(r.objective_oracle)] + [_fmt(r.oracle[n]) for n in prop_names])
        paths.append(path)
    return paths
