import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcases import COMPOSITES, PRIMITIVES
from latentmol.errors import IncompatibleCheckpoint, MissingGradient, NotScalar, ShapeMismatch, TapeConsumed
from latentmol.tensor import Adam, Tensor, backward, cosine_lr, normal, stream
from latentmol.tensor import core as T
from latentmol.tensor import io
from latentmol.tensor.gradcheck import max_relative_error


def test_softmax_of_zeros_is_uniform():
    np.testing.assert_allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_matmul_identity():
    x = np.arange(6, dtype=np.float32).reshape(2, 3)
    np.testing.assert_array_equal(T.matmul(Tensor(x), Tensor(np.eye(3))).data, x)


def test_uniform_cross_entropy_is_log_vocab():
    v = 7
    loss = T.cross_entropy(Tensor(np.zeros((1, v))), np.array([3]))
    assert loss.item() == pytest.approx(math.log(v), rel=1e-6)


def test_sum_of_squares_gradient():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    backward(T.sum(T.mul(x, x)))
    np.testing.assert_allclose(x.grad, [2.0, -4.0, 6.0])


def test_constant_inputs_get_no_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([3.0, 4.0])
    backward(T.sum(T.mul(x, c)))
    assert c.grad is None
    np.testing.assert_allclose(x.grad, [3.0, 4.0])


def test_detach_cuts_the_tape():
    x = Tensor([2.0], requires_grad=True)
    y = T.mul(x, x).detach()
    out = T.sum(T.mul(y, x))
    backward(out)
    np.testing.assert_allclose(x.grad, [4.0])


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(NotScalar):
        backward(T.mul(x, 2.0))


def test_tape_is_consumed():
    x = Tensor([1.0], requires_grad=True)
    loss = T.sum(T.mul(x, x))
    backward(loss)
    with pytest.raises(TapeConsumed):
        backward(loss)


def test_shared_subexpression_accumulates():
    x = Tensor([3.0], requires_grad=True)
    y = T.mul(x, 2.0)
    backward(T.sum(T.add(y, T.mul(y, y))))
    np.testing.assert_allclose(x.grad, [2.0 + 8.0 * 3.0])


def test_trailing_axis_broadcast_rejected():
    with pytest.raises(ShapeMismatch):
        T.add(Tensor(np.ones((3, 4))), Tensor(np.ones((3, 1))))
    with pytest.raises(ShapeMismatch):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(10):
        assert max_relative_error(*PRIMITIVES[name](rng)) < 1e-3


@pytest.mark.parametrize("name", sorted(COMPOSITES))
def test_composite_gradients(name):
    rng = np.random.default_rng(1)
    for _ in range(10):
        assert max_relative_error(*COMPOSITES[name](rng)) < 1e-3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_compositions(seed):
    """Chains of random smooth ops over one (3, 4) input."""
    rng = np.random.default_rng(seed)
    ops = [
        T.tanh,
        T.softmax,
        T.layernorm,
        lambda x: T.mul(x, x),
        lambda x: T.exp(T.mul(x, 0.3)),
        lambda x: T.matmul(x, Tensor(rng_w)),
        lambda x: T.transpose(T.transpose(x, (1, 0)), (1, 0)),
        lambda x: T.concat([x, T.mul(x, 0.5)], axis=0),
    ]
    rng_w = rng.normal(size=(4, 4)) * 0.5
    chain = [ops[k] for k in rng.integers(0, len(ops), size=int(rng.integers(2, 6)))]
    box = {}

    def fn(x):
        for op in chain:
            x = op(x)
        if "w" not in box:
            box["w"] = rng.normal(size=x.shape)
        return T.sum(T.mul(x, Tensor(box["w"].astype(x.dtype))))

    assert max_relative_error(fn, [rng.normal(size=(3, 4))]) < 1e-3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_softmax_rows_sum_to_one_and_layernorm_centres(seed):
    x = np.random.default_rng(seed).normal(size=(5, 7)) * 10
    np.testing.assert_allclose(T.softmax(Tensor(x)).data.sum(axis=-1), 1.0, rtol=1e-5)
    y = T.layernorm(Tensor(x)).data
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-5)
    np.testing.assert_allclose(y.std(axis=-1), 1.0, atol=1e-3)


def test_adam_first_step_moves_by_lr():
    p = Tensor(np.array([1.0, -1.0, 5.0]), requires_grad=True)
    opt = Adam({"p": p}, lr_max=0.1, total_steps=100)
    p.grad = np.array([3.0, -0.2, 1e-3], dtype=np.float32)
    opt.step()
    np.testing.assert_allclose(p.data, [0.9, -0.9, 4.9], atol=1e-4)


def test_adam_requires_gradients():
    p = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(MissingGradient):
        Adam({"p": p}).step()


def test_cosine_endpoints():
    assert cosine_lr(0, 100, 1e-3) == pytest.approx(1e-3)
    assert cosine_lr(100, 100, 1e-3) == pytest.approx(1e-5)
    assert cosine_lr(50, 100, 1e-3) == pytest.approx((1e-3 + 1e-5) / 2)


def test_tensor_file_round_trip(tmp_path):
    tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b.c": np.array([1.5], dtype=np.float32)}
    io.save(tmp_path / "t.bin", {"kind": "x", "n": "2"}, tensors)
    header, back = io.load(tmp_path / "t.bin")
    assert header == {"kind": "x", "n": "2"}
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])
    assert io.dumps(header, back) == (tmp_path / "t.bin").read_bytes()


def test_truncated_tensor_file(tmp_path):
    blob = io.dumps({"kind": "x"}, {"a": np.ones(4, dtype=np.float32)})
    (tmp_path / "t.bin").write_bytes(blob[:-3])
    with pytest.raises(IncompatibleCheckpoint):
        io.load(tmp_path / "t.bin")


def test_streams_are_reproducible_and_independent():
    a = normal(7, (1000,), "start", 12)
    np.testing.assert_array_equal(a, normal(7, (1000,), "start", 12))
    b = normal(7, (1000,), "start", 13)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.1
    assert not np.array_equal(a, normal(8, (1000,), "start", 12))
    # draws do not depend on what else was drawn from other streams first
    stream(7, "noise").random(10_000)
    np.testing.assert_array_equal(a, normal(7, (1000,), "start", 12))
