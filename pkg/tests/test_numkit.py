import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gcgts import numkit as nk

from _util import numeric_grad, rel_err

F64 = np.float64


def grad_of(build, *arrays_):
    """Analytic grads of scalar ``build(*tensors)`` for f64 inputs."""
    ts = [nk.parameter(a.astype(F64)) for a in arrays_]
    out = build(*ts)
    nk.backward(out)
    return [t.grad for t in ts]


def check_grad(build, *arrays_, tol=1e-4):
    arrays_ = [a.astype(F64) for a in arrays_]
    analytic = grad_of(build, *arrays_)
    for k, a in enumerate(arrays_):
        def f():
            return float(build(*[nk.tensor(x, dtype=F64) for x in arrays_]).data)
        num = numeric_grad(f, a)
        assert rel_err(analytic[k], num) < tol, f"input {k}"


rng = np.random.default_rng(0)


def test_matmul_identity():
    m = rng.normal(size=(3, 3))
    out = nk.matmul(nk.tensor(np.eye(3), F64), nk.tensor(m, F64))
    np.testing.assert_allclose(out.data, m)


def test_matmul_small():
    out = nk.matmul(nk.tensor([[1, 2], [3, 4]]), nk.tensor([[1], [1]]))
    np.testing.assert_array_equal(out.data, [[3], [7]])


def test_matmul_grad_is_ones_times_b_transpose():
    a = rng.normal(size=(4, 5))
    b = rng.normal(size=(5, 2))
    ga, = grad_of(lambda x: nk.sum_all(nk.matmul(x, nk.tensor(b, F64))), a)
    np.testing.assert_allclose(ga, np.ones((4, 2)) @ b.T)
    check_grad(lambda x, y: nk.sum_all(nk.matmul(x, y)), a, b)


def test_matmul_shape_error_names_both():
    with pytest.raises(nk.DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        nk.matmul(nk.tensor(np.ones((2, 3))), nk.tensor(np.ones((2, 3))))


def test_relu_values():
    np.testing.assert_array_equal(nk.relu(nk.tensor([-1, 0, 2])).data, [0, 0, 2])


def test_relu_subgradient_zero_at_zero():
    x = nk.parameter(np.array([0.0, 1.0]))
    nk.backward(nk.sum_all(nk.relu(x)))
    np.testing.assert_array_equal(x.grad, [0, 1])


def test_concat_shape():
    out = nk.concat([nk.tensor([1, 2]), nk.tensor([3])])
    assert out.shape == (3,)
    np.testing.assert_array_equal(out.data, [1, 2, 3])


def test_concat_incompatible():
    with pytest.raises(nk.DimensionError):
        nk.concat([nk.tensor(np.ones((2, 2))), nk.tensor(np.ones((3, 1)))])


def test_add_broadcast_error():
    with pytest.raises(nk.DimensionError):
        nk.add(nk.tensor(np.ones(3)), nk.tensor(np.ones(4)))


def test_max_over_gradient():
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(3,))
    check_grad(lambda t: nk.sum_all(nk.mul(nk.max_over(t, axis=1), nk.tensor(w, F64))), x)
    w0 = rng.normal(size=(4,))
    check_grad(lambda t: nk.sum_all(nk.mul(nk.max_over(t, axis=0), nk.tensor(w0, F64))), x)


def test_max_ties_route_to_first():
    x = nk.parameter(np.array([[1.0, 3.0, 3.0]]))
    nk.backward(nk.sum_all(nk.max_over(x, axis=1)))
    np.testing.assert_array_equal(x.grad, [[0, 1, 0]])


def test_max_with_mask_and_empty_slice():
    x = nk.parameter(np.array([[5.0, 1.0], [2.0, 9.0]]))
    where = np.array([[0, 1], [0, 0]])
    out = nk.max_over(x, axis=1, where=where)
    np.testing.assert_array_equal(out.data, [1.0, 0.0])
    nk.backward(nk.sum_all(out))
    np.testing.assert_array_equal(x.grad, [[0, 1], [0, 0]])


@pytest.mark.parametrize("logits,mask,expected", [
    ([0, 0, 0], [1, 1, 1], [1 / 3, 1 / 3, 1 / 3]),
    ([5, 1], [1, 0], [1, 0]),
    ([1000, 1000], [1, 1], [0.5, 0.5]),
    ([3, -2, 7], [0, 0, 0], [0, 0, 0]),
])
def test_masked_softmax_examples(logits, mask, expected):
    out = nk.masked_softmax(nk.tensor(logits, F64), np.array(mask))
    assert np.all(np.isfinite(out.data))
    np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_masked_softmax_gradient():
    x = rng.normal(size=(3, 5))
    mask = np.array([[1, 0, 1, 1, 0], [1, 1, 1, 1, 1], [0, 0, 1, 0, 0]])
    w = rng.normal(size=(3, 5))
    check_grad(lambda t: nk.sum_all(nk.mul(nk.masked_softmax(t, mask), nk.tensor(w, F64))), x)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50)),
       st.lists(st.integers(0, 1), min_size=8, max_size=8))
def test_masked_softmax_normalization(x, bits):
    mask = np.array(bits[:len(x)])
    out = nk.masked_softmax(nk.tensor(x, F64), mask).data
    if mask.any():
        assert abs(out.sum() - 1) <= 1e-6
        assert np.all(out[mask == 0] == 0)
    else:
        assert np.all(out == 0)


def test_cross_entropy_values():
    assert float(nk.cross_entropy(nk.tensor([1, 0, 0, 0], F64), 0).data) == 0
    ce = float(nk.cross_entropy(nk.tensor([0.25] * 4, F64), 2).data)
    assert ce == pytest.approx(math.log(4), abs=1e-6)
    assert round(ce, 6) == 1.386294


def test_cross_entropy_clamps_zero_probability():
    ce = float(nk.cross_entropy(nk.tensor([1, 0, 0, 0], F64), 1).data)
    assert ce == pytest.approx(-math.log(1e-12))


def test_cross_entropy_target_out_of_range():
    with pytest.raises(IndexError):
        nk.cross_entropy(nk.tensor([0.5, 0.5]), 2)


def test_cross_entropy_gradient_through_softmax():
    logits = rng.normal(size=(4,))
    check_grad(lambda t: nk.cross_entropy(nk.softmax(t), 2), logits)
    grid = rng.normal(size=(3, 3, 4))
    target = rng.integers(0, 4, size=(3, 3))
    weight = np.triu(np.ones((3, 3)))
    check_grad(lambda t: nk.cross_entropy(nk.softmax(t), target, weight), grid)


@pytest.mark.parametrize("name,build,shapes", [
    ("mul", lambda a, b: nk.sum_all(nk.mul(nk.mul(a, b), a)), [(3, 4), (3, 4)]),
    ("add-broadcast", lambda a, b: nk.sum_all(nk.mul(nk.add(a, b), nk.add(a, b))), [(3, 4), (4,)]),
    ("relu", lambda a: nk.sum_all(nk.mul(nk.relu(a), a)), [(5, 3)]),
    ("concat", lambda a, b: nk.sum_all(nk.mul(nk.concat([a, b]), nk.concat([b, a]))), [(2, 3), (2, 3)]),
    ("reshape", lambda a: nk.sum_all(nk.mul(nk.reshape(a, (3, 4)), nk.reshape(a, (3, 4)))), [(4, 3)]),
    ("transpose", lambda a: nk.sum_all(nk.mul(nk.transpose(a, (1, 0, 2)), a)), [(3, 3, 2)]),
    ("expand", lambda a: nk.sum_all(nk.mul(nk.expand(a, (4, 3, 2)), nk.expand(a, (4, 3, 2)))), [(1, 3, 2)]),
    ("pair_concat", lambda a, b: nk.sum_all(nk.mul(nk.pair_concat(a, b), nk.pair_concat(a, b))), [(3, 2), (4, 1)]),
    ("shift-row", lambda a: nk.sum_all(nk.mul(nk.shift(a, 1, 1), a)), [(3, 3, 2)]),
    ("shift-col", lambda a: nk.sum_all(nk.mul(nk.shift(a, 0, 2), a)), [(3, 3, 2)]),
    ("sum-axis", lambda a: nk.sum_all(nk.mul(nk.sum_all(a, axis=1), nk.sum_all(a, axis=1))), [(3, 4)]),
    ("batched-matmul", lambda a, b: nk.sum_all(nk.mul(nk.matmul(a, b), nk.matmul(a, b))), [(2, 3, 4), (4, 5)]),
])
def test_op_gradients(name, build, shapes):
    arrays_ = [rng.normal(size=s) for s in shapes]
    check_grad(build, *arrays_)


def test_take_gradient_accumulates_repeated_rows():
    table = nk.parameter(np.arange(6, dtype=F64).reshape(3, 2))
    out = nk.take(table, np.array([[0, 2], [2, 2]]))
    nk.backward(nk.sum_all(out))
    np.testing.assert_array_equal(table.grad, [[1, 1], [0, 0], [3, 3]])


def test_backward_examples():
    x = nk.parameter(np.array([1.0, 2.0, 3.0]))
    nk.backward(nk.sum_all(x))
    np.testing.assert_array_equal(x.grad, [1, 1, 1])
    y = nk.parameter(np.array([1.0, 2.0]))
    nk.backward(nk.sum_all(nk.mul(y, y)))
    np.testing.assert_array_equal(y.grad, [2, 4])


def test_backward_rejects_nonscalar_and_repeat():
    x = nk.parameter(np.ones(3))
    with pytest.raises(nk.ContractError):
        nk.backward(nk.mul(x, 2.0))
    loss = nk.sum_all(x)
    nk.backward(loss)
    with pytest.raises(nk.ContractError):
        nk.backward(loss)


def test_backward_visits_shared_nodes_once():
    # diamond: y feeds two branches; its grad must be summed, not duplicated
    x = nk.parameter(np.array([2.0]))
    y = nk.mul(x, 3.0)
    loss = nk.sum_all(nk.add(nk.mul(y, y), y))
    nk.backward(loss)
    np.testing.assert_allclose(x.grad, [3 * (2 * 6 + 1)])


def test_tape_replay_identical_grads():
    a = rng.normal(size=(4, 5)).astype(np.float32)
    w = nk.parameter(rng.normal(size=(5, 3)).astype(np.float32))
    grads = []
    for _ in range(2):
        w.grad = None
        loss = nk.cross_entropy(nk.softmax(nk.matmul(nk.tensor(a), w)), np.array([0, 1, 2, 1]))
        nk.backward(loss)
        grads.append(w.grad.copy())
    assert np.array_equal(grads[0], grads[1])


def test_f32_determinism():
    def run():
        r = nk.rng_for(5, "w")
        w = nk.parameter(r.normal(size=(6, 4)).astype(np.float32))
        x = nk.tensor(nk.rng_for(5, "x").normal(size=(3, 6)).astype(np.float32))
        loss = nk.cross_entropy(nk.softmax(nk.matmul(x, w)), np.array([0, 3, 1]))
        nk.backward(loss)
        return loss.data.tobytes(), w.grad.tobytes()
    assert run() == run()


def test_dtype_switch():
    assert nk.tensor([1, 2]).dtype == np.float32
    assert nk.tensor([1, 2], dtype=F64).dtype == np.float64
    out = nk.matmul(nk.tensor(np.ones((2, 2)), F64), nk.tensor(np.ones((2, 2)), F64))
    assert out.dtype == np.float64


def test_glorot_range_and_name_streams():
    w = nk.glorot_uniform((10, 30), seed=1, name="a")
    assert np.abs(w).max() <= math.sqrt(6 / 40)
    assert np.array_equal(w, nk.glorot_uniform((10, 30), seed=1, name="a"))
    assert not np.array_equal(w, nk.glorot_uniform((10, 30), seed=1, name="b"))


# ---------------------------------------------------------------- optimizer

def test_adam_zero_gradient_keeps_params():
    p = nk.parameter(np.array([1.5, -2.0]))
    opt = nk.Adam({"p": p}, lr=0.1)
    opt.m["p"][:] = 1.0
    opt.v["p"][:] = 1.0
    opt.step({"p": np.zeros(2)})
    # moments decay, parameters move only by the stale first moment
    np.testing.assert_allclose(opt.m["p"], 0.9)
    np.testing.assert_allclose(opt.v["p"], 0.999)
    p2 = nk.parameter(np.array([1.5, -2.0]))
    opt2 = nk.Adam({"p": p2}, lr=0.1)
    opt2.step({"p": np.zeros(2)})
    np.testing.assert_array_equal(p2.data, [1.5, -2.0])


def test_adam_first_step_sign():
    p = nk.parameter(np.array([0.0]))
    opt = nk.Adam({"p": p}, lr=5e-5)
    opt.step({"p": np.array([1.0])})
    assert p.data[0] < 0
    assert p.data[0] == pytest.approx(-5e-5, rel=1e-6)


def test_adam_missing_grad():
    opt = nk.Adam({"p": nk.parameter(np.zeros(2))})
    with pytest.raises(nk.ContractError):
        opt.step()


def _adam_reference(w, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2 * (w - 3)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return w


def test_adam_quadratic():
    w = nk.parameter(np.array([0.0]))
    opt = nk.Adam({"w": w}, lr=0.1)
    for _ in range(100):
        opt.zero_grad()
        d = nk.add(w, -3.0)
        nk.backward(nk.sum_all(nk.mul(d, d)))
        opt.step()
    expected = _adam_reference(0.0, 100, 0.1)
    assert abs(expected - 3) < 0.1
    assert abs(w.data[0] - 3) < 0.1
    assert w.data[0] == pytest.approx(expected, abs=1e-12)


def test_masked_softmax_propagates_nan():
    out = nk.masked_softmax(nk.tensor([[np.nan, 0.0, 1.0], [1.0, 2.0, 3.0]]), np.array([[1, 1, 0], [0, 0, 0]]))
    assert np.all(np.isnan(out.data[0, :2])) and out.data[0, 2] == 0
    assert np.array_equal(out.data[1], [0, 0, 0])
