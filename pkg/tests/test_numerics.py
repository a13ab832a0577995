import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gailee import numerics as F
from gailee.numerics import Parameter, Tensor

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def _param(rng, shape, name="p"):
    return Parameter(rng.normal(size=shape), name)


def test_tape_records_only_when_active():
    a = Parameter(np.ones((2, 2)), "a")
    with F.Tape() as tape:
        F.sum(F.mul(a, a))
        with F.no_tape():
            F.sum(a)
            assert not F.recording()
    assert tape.kinds == ["mul", "sum"]
    assert not F.recording()


def test_backward_matches_closed_form():
    a = Parameter(np.array([[1.0, 2.0], [3.0, 4.0]]), "a")
    with F.Tape() as tape:
        loss = F.sum(F.mul(a, a))
    F.backward(tape, loss)
    np.testing.assert_allclose(a.grad, 2 * a.value)


def test_gradients_accumulate_until_zeroed():
    a = Parameter(np.ones(3), "a")
    for _ in range(2):
        with F.Tape() as tape:
            loss = F.sum(a)
        F.backward(tape, loss)
    np.testing.assert_allclose(a.grad, 2.0)
    F.zero_grad([a])
    assert not a.grad.any()


# each closure builds a scalar from one or two parameters through one op family
OPS = {
    "matmul": lambda a, b: F.sum(F.matmul(a, b)),
    "add_sub_mul": lambda a, b: F.sum(F.mul(F.sub(F.add(a, b), b), b)),
    "concat_index": lambda a, b: F.sum(F.mul(F.index(F.concat([a, b], 0), (slice(1, 4), slice(None))),
                                             F.index(F.concat([b, a], 1), (slice(None), slice(0, 3))))),
    "sigmoid_tanh": lambda a, b: F.sum(F.mul(F.sigmoid(a), F.tanh(b))),
    "softmax_log": lambda a, b: F.sum(F.mul(F.log(F.softmax_rows(a)), F.softmax_rows(b))),
    "log_sigmoid_mean": lambda a, b: F.mean(F.mul(F.log_sigmoid(a), b)),
    "scalars": lambda a, b: F.sum(F.scalar_mul(F.add_scalar(F.mul(a, b), 0.3), -1.7)),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_central_differences(name, rng):
    a, b = _param(rng, (3, 3), "a"), _param(rng, (3, 3), "b")
    f = OPS[name]
    for p in (a, b):
        assert F.finite_difference_check(lambda: f(a, b), p) < 1e-6


def test_gather_and_pick_gradients(rng):
    table = _param(rng, (5, 3), "table")
    ids = [0, 3, 3, 1]
    w = Tensor(rng.normal(size=(4, 3)))
    f = lambda: F.sum(F.mul(F.gather_rows(table, ids), w))  # noqa: E731
    assert F.finite_difference_check(f, table) < 1e-6
    g = lambda: F.sum(F.log(F.pick(F.softmax_rows(table), [0, 1, 2], [2, 0, 2])))  # noqa: E731
    assert F.finite_difference_check(g, table) < 1e-6


def test_masked_softmax_zeroes_masked_entries(rng):
    x = Tensor(rng.normal(size=(2, 4)))
    mask = np.array([[True, False, True, True], [False, False, True, False]])
    p = F.softmax_rows(x, mask).value
    assert np.all(p[~mask] == 0.0)
    np.testing.assert_allclose(p.sum(1), 1.0)
    assert p[1, 2] == 1.0


def _lstm_reference(xproj, w_h, h, c):
    """Plain per-step LSTM with gate order input, forget, output, candidate."""
    H = w_h.shape[0]
    out = []
    for z in xproj:
        z = z + h @ w_h
        i, f, o = (1 / (1 + np.exp(-z[k * H:(k + 1) * H])) for k in range(3))
        g = np.tanh(z[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h)
    return np.array(out)


def test_lstm_recurrence_matches_reference(rng):
    H = 3
    xproj = rng.normal(size=(5, 4 * H))
    w_h = rng.normal(size=(H, 4 * H))
    h0, c0 = rng.normal(size=(1, H)), rng.normal(size=(1, H))
    got = F.lstm_recurrence(Tensor(xproj), Tensor(w_h), Tensor(h0), Tensor(c0)).value
    np.testing.assert_allclose(got, _lstm_reference(xproj, w_h, h0[0], c0[0]), rtol=1e-12, atol=1e-12)


def test_lstm_recurrence_gradients(rng):
    H = 3
    xproj, w_h = _param(rng, (4, 4 * H), "x"), _param(rng, (H, 4 * H), "w_h")
    h0, c0 = _param(rng, (1, H), "h0"), _param(rng, (1, H), "c0")
    weights = Tensor(rng.normal(size=(4, H)))
    f = lambda: F.sum(F.mul(F.lstm_recurrence(xproj, w_h, h0, c0), weights))  # noqa: E731
    for p in (xproj, w_h, h0, c0):
        assert F.finite_difference_check(f, p) < 1e-6


def _adam_reference(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return p


def test_adam_first_step_moves_by_lr_against_gradient_sign():
    p = Parameter(np.array([1.0, -2.0, 0.5]), "p")
    p.grad[...] = [3.0, -0.1, 1e-3]
    F.adam_step([p], lr=0.001)
    # bias-corrected first step is lr * g / (|g| + eps)
    np.testing.assert_allclose(p.value, [0.999, -1.999, 0.499], atol=1e-8)
    assert p.step_count == 1


def test_adam_matches_reference_over_steps(rng):
    p = Parameter(rng.normal(size=(4, 3)), "p")
    start = p.value.copy()
    grads = [rng.normal(size=(4, 3)) for _ in range(7)]
    for g in grads:
        p.grad[...] = g
        F.adam_step([p], lr=0.01)
    np.testing.assert_allclose(p.value, _adam_reference(start, grads, 0.01), rtol=1e-12, atol=1e-14)


def test_adam_rejects_non_finite_gradient():
    p = Parameter(np.zeros(2), "bad")
    p.grad[...] = [np.nan, 0.0]
    with pytest.raises(FloatingPointError, match="bad"):
        F.adam_step([p])


def test_finite_difference_check_flags_corruption(rng):
    a = _param(rng, (3, 3))
    f = lambda: F.sum(F.mul(a, a))  # noqa: E731
    assert F.finite_difference_check(f, a) < 1e-8
    assert F.finite_difference_check(f, a, corrupt=0.01) > 1e-3


def test_checkpoint_round_trip(tmp_path, rng):
    tensors = {"a": Parameter(rng.normal(size=(2, 3)), "a"), "b/c": rng.normal(size=(4,))}
    F.save_checkpoint(tmp_path / "x.ckpt", tensors)
    back = F.load_checkpoint(tmp_path / "x.ckpt")
    assert list(back) == ["a", "b/c"]
    np.testing.assert_array_equal(back["a"], tensors["a"].value)
    np.testing.assert_array_equal(back["b/c"], tensors["b/c"])


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad").write_bytes(b"nothing here")
    with pytest.raises(ValueError):
        F.load_checkpoint(tmp_path / "bad")


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite))
def test_softmax_rows_is_a_distribution(x):
    p = F.softmax_rows(Tensor(x)).value
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(1), 1.0, rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5,), elements=st.floats(-800, 800, allow_nan=False)))
def test_sigmoid_and_log_sigmoid_stay_finite(x):
    s = F.sigmoid(Tensor(x)).value
    ls = F.log_sigmoid(Tensor(x)).value
    assert np.all((s >= 0) & (s <= 1))
    assert np.all(np.isfinite(ls)) and np.all(ls <= 0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, (3, 2), elements=finite))
def test_matmul_gradient_is_outer_product(a, b):
    pa = Parameter(a, "a")
    with F.Tape() as tape:
        loss = F.sum(F.matmul(pa, Tensor(b)))
    F.backward(tape, loss)
    np.testing.assert_allclose(pa.grad, np.ones((2, 2)) @ b.T, atol=1e-12)
