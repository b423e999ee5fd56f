import numpy as np
import pytest

from contracts import tiny_model
from latentmol.codec import Vocab
from latentmol.inception import (
    CHUNK,
    StartResult,
    descend,
    optimize,
    rank_and_select,
    score_results,
    write_results,
    write_summary,
    write_tables,
)
from latentmol.molgraph import MolGraph
from latentmol.oracles import Objective, OracleHub, Term, default_objective, default_oracles
from latentmol.surrogate import Surrogate
from latentmol.tensor import core as T
from latentmol.tensor.core import Tensor


class Linear:
    def __init__(self, w):
        self.w = Tensor(np.asarray(w, dtype=np.float32))

    def predict(self, z):
        return T.matmul(z, self.w)


class Bowl:
    """``predict(z) = |z - a|^2`` as a single property."""

    def __init__(self, a):
        self.a = Tensor(np.asarray(a, dtype=np.float32))

    def predict(self, z):
        d = T.sub(z, self.a)
        return T.sum(T.mul(d, d), axis=1, keepdims=True)


def test_linear_surrogate_moves_in_a_straight_line():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(5, 2))
    coef = np.array([1.0, -0.5])
    z0 = rng.normal(size=(3, 5)).astype(np.float32)
    z, traj, diverged = descend(Linear(w), coef, z0, steps=7, lr=0.1)
    np.testing.assert_allclose(z, z0 - 7 * 0.1 * (w @ coef), rtol=1e-5, atol=1e-5)
    assert traj.shape == (3, 8) and not diverged.any()
    # objective drops by lr * |grad|^2 per step
    np.testing.assert_allclose(np.diff(traj, axis=1), -0.1 * np.sum((w @ coef) ** 2), rtol=1e-4)


def test_quadratic_converges_to_minimum():
    a = np.array([1.0, -2.0, 0.5])
    z, traj, _ = descend(Bowl(a), np.array([1.0]), np.zeros((2, 3), dtype=np.float32), steps=100, lr=0.1)
    np.testing.assert_allclose(z, [a, a], atol=1e-5)
    assert traj[0, -1] < 1e-9 + 1e-8


@pytest.mark.filterwarnings("ignore:overflow")
def test_divergent_start_is_flagged_and_frozen():
    z0 = np.array([[0.0], [1e30]], dtype=np.float32)
    z, _, diverged = descend(Bowl([0.0]), np.array([1.0]), z0, steps=3, lr=0.1)
    assert diverged.tolist() == [False, True]
    assert np.isfinite(z[0]).all()


def _setup(decoder="nar"):
    vocab = Vocab(["[pad]", "[bos]", "[eos]", "[C]", "[O]", "[N]", "[=C]", "[Ring1]", "[Branch1]", "[F]"])
    model = tiny_model(decoder, vocab_size=len(vocab), seed=3)
    sur = Surrogate(["pseudoSA", "pseudoQED"], 8, 16, seed=4)
    sur.params["sur.2.w"].data[:] = np.random.default_rng(5).normal(size=(16, 2)) * 0.3
    return vocab, model, sur


def test_results_do_not_depend_on_worker_count():
    vocab, model, sur = _setup()
    n = 2 * CHUNK + 7
    a = optimize(model, vocab, sur, default_objective(), n_starts=n, steps=5, seed=1, workers=1)
    b = optimize(model, vocab, sur, default_objective(), n_starts=n, steps=5, seed=1, workers=3)
    assert [r.index for r in a] == list(range(n))
    for x, y in zip(a, b):
        assert x.molecule == y.molecule
        np.testing.assert_array_equal(x.z_final, y.z_final)
        assert x.trajectory == y.trajectory


def test_single_start_without_steps():
    vocab, model, sur = _setup("cmlmc")
    (r,) = optimize(model, vocab, sur, default_objective(), n_starts=1, steps=0, seed=2, iterations=3)
    np.testing.assert_array_equal(r.z0, r.z_final)
    assert len(r.trajectory) == 1


def test_surrogate_objective_improves():
    vocab, model, sur = _setup()
    res = optimize(model, vocab, sur, default_objective(), n_starts=20, steps=20, lr=0.05, seed=0)
    assert all(r.trajectory[-1] <= r.trajectory[0] for r in res)


def _result(i, mol, props):
    return StartResult(i, np.zeros(1), np.zeros(1), [0.0], mol, MolGraph(()), {}, oracle=props)


def test_ranking_dedups_and_breaks_ties():
    obj = Objective((Term("a", 1.0, "min"), Term("b", 2.0, "max")))
    rs = [
        _result(0, "CC", {"a": 1.0, "b": 0.0}),
        _result(1, "CO", {"a": 1.0, "b": 0.0}),
        _result(2, "CC", {"a": 0.0, "b": 0.0}),
        _result(3, "CN", {"a": 5.0, "b": 3.0}),
    ]
    for r in rs:
        r.objective_oracle = r.oracle["a"] - 2 * r.oracle["b"]
    sel = rank_and_select(rs, obj, top_k=10)
    assert [r.index for r in sel.tables["a"]] == [2, 1, 3]  # CC kept once, at its best
    assert [r.index for r in sel.tables["b"]] == [3, 0, 1]  # ties by string then index
    assert [r.index for r in sel.tables["objective"]] == [3, 2, 1]
    assert sel.count == 4
    assert sel.means["a"] == pytest.approx(7.0 / 4)
    assert len(rank_and_select(rs, obj, top_k=2).tables["a"]) == 2


def test_pipeline_files(tmp_path):
    vocab, model, sur = _setup()
    obj = default_objective()
    res = optimize(model, vocab, sur, obj, n_starts=12, steps=3, seed=0)
    with OracleHub(default_oracles()) as hub:
        failures = score_results(res, hub, obj)
    assert failures == {"pseudoSA": 0, "pseudoQED": 0}
    sel = rank_and_select(res, obj, top_k=5)
    write_results(tmp_path / "results.csv", res)
    write_summary(tmp_path / "summary.csv", sel)
    paths = write_tables(tmp_path, sel)
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert lines[0] == "start_index,molecule,objective_surrogate,objective_oracle,prop:pseudoQED,prop:pseudoSA"
    assert len(lines) == 13
    assert sorted(p.name for p in paths) == ["top_objective.csv", "top_pseudoQED.csv", "top_pseudoSA.csv"]
    assert (tmp_path / "summary.csv").read_text().startswith("count,")
