import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurrent_fqi.numerics import (
    NonFiniteError,
    OptimizerState,
    ParameterSet,
    ShapeError,
    Tape,
    affine,
    grad_check,
    mse_loss,
    rmsprop_update,
    sigmoid,
)
from recurrent_fqi.recnet import lstm_step, mut1_step


def test_sigmoid_examples():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    big = sigmoid(np.array([50.0]))[0]
    assert 1 - 1e-15 < big <= 1.0
    assert sigmoid(np.array([math.log(3)]))[0] == pytest.approx(0.75, abs=1e-15)


def test_sigmoid_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        sigmoid(np.array([np.nan]))


@given(st.floats(-30, 30))
def test_sigmoid_symmetry(x):
    assert abs(sigmoid(np.array([x]))[0] + sigmoid(np.array([-x]))[0] - 1.0) <= 1e-12


def test_affine_examples():
    np.testing.assert_array_equal(affine(np.eye(2), np.array([1.0, 2.0])), [1.0, 2.0])
    out = affine(np.zeros((2, 3)), np.ones(3), np.zeros((2, 2)), np.array([4.0, 5.0]), np.array([3.0, 3.0]))
    np.testing.assert_array_equal(out, [3.0, 3.0])
    out = affine(np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([1.0, 1.0]), b=np.array([0.0, 1.0]))
    np.testing.assert_array_equal(out, [2.0, 2.0])


def test_affine_shape_errors():
    t = Tape()
    with pytest.raises(ShapeError):
        t.affine(np.eye(2), np.ones(3), np.zeros(2))
    with pytest.raises(ShapeError):
        t.affine(np.eye(2), np.ones(2), np.zeros(3))
    with pytest.raises(ShapeError):
        t.affine(np.eye(2), np.ones(2), np.zeros(2), U=np.eye(2))
    with pytest.raises(ShapeError):
        t.mul(np.ones(2), np.ones(3))


def test_overflow_is_an_error():
    with pytest.raises(NonFiniteError), np.errstate(over="ignore"):
        affine(np.array([[1e308]]), np.array([10.0]))


def test_backward_hand_example():
    # loss = (w*x - t)^2 with w=1, x=2, t=0: loss 4, dloss/dw = 2*(wx - t)*x = 8
    tape = Tape()
    w = tape.param("w", np.array([[1.0]]))
    unused = tape.param("unused", np.array([[3.0]]))
    pred = tape.affine(w, np.array([2.0]), np.zeros(1))
    loss = tape.mse(pred, np.zeros(1), np.ones(1))
    assert float(loss.value) == 4.0
    grads = tape.backward(loss)
    assert grads["w"][0, 0] == 8.0
    assert grads["unused"][0, 0] == 0.0
    assert unused.value[0, 0] == 3.0


def test_backward_errors():
    with pytest.raises(ValueError):
        Tape().backward()
    tape = Tape()
    w = tape.param("w", np.eye(2))
    tape.affine(w, np.ones(2), np.zeros(2))
    with pytest.raises(ValueError):
        tape.backward()
    # a vector seed is fine
    grads = tape.backward(seed=np.array([1.0, 0.0]))
    np.testing.assert_array_equal(grads["w"], [[1.0, 1.0], [0.0, 0.0]])


def test_replay_is_bit_exact():
    rng = np.random.default_rng(0)
    params = ParameterSet({"W": rng.normal(size=(3, 4)), "U": rng.normal(size=(3, 3)), "b": rng.normal(size=3)})
    tape = Tape()
    p = params.on_tape(tape)
    h = tape.tanh(tape.affine(p["W"], rng.normal(size=4), p["b"], p["U"], rng.normal(size=3)))
    z = tape.sigmoid(h)
    out = tape.blend(z, h, tape.mul(h, h))
    tape.mse(out, np.zeros(3), np.ones(3))
    recorded = [o.value.copy() for _, _, o in tape.ops]
    replayed = tape.replay()
    assert all(np.array_equal(a, b) for a, b in zip(recorded, replayed))


def test_mse_examples():
    assert mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]), np.ones(2)) == 0.0
    assert mse_loss(np.array([1.0, 5.0]), np.array([1.0, 3.0]), np.array([0.0, 1.0])) == 4.0
    assert mse_loss(np.array([2.0, 2.0]), np.zeros(2), np.ones(2)) == 4.0
    assert mse_loss(np.array([2.0, 2.0]), np.zeros(2), np.zeros(2)) == 0.0


def test_grad_check_linear_is_exact():
    params = ParameterSet({"w": np.array([[0.7, -1.3]])})
    x = np.array([2.0, 0.5])

    def forward(tape, p):
        return tape.affine(p["w"], x, np.zeros(1))

    assert grad_check(forward, params) < 1e-10


def test_grad_check_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        grad_check(lambda t, p: None, ParameterSet(), epsilon=0.1)


def _cell_params(rng, shapes):
    return ParameterSet({k: rng.normal(scale=0.5, size=s) for k, s in shapes.items()})


@pytest.mark.parametrize("seed", range(3))
def test_grad_check_lstm_window(seed):
    rng = np.random.default_rng(seed)
    n, d = 5, 3
    shapes = {}
    for g in "ifoc":
        shapes.update({f"W_{g}": (n, d), f"U_{g}": (n, n), f"b_{g}": (n,)})
    params = _cell_params(rng, shapes)
    xs = rng.normal(size=(10, d))
    target = rng.normal(size=n)

    def forward(tape, p):
        h = tape.constant(np.zeros(n))
        c = tape.constant(np.zeros(n))
        for x in xs:
            h, c = lstm_step(p, x, h, c, tape)
        return tape.mse(h, target, np.ones(n))

    assert grad_check(forward, params, 1e-5) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_grad_check_mut1_window(seed):
    rng = np.random.default_rng(100 + seed)
    n = 5
    shapes = {"W_z": (n, n), "b_z": (n,), "W_r": (n, n), "W_h": (n, n), "b_r": (n,), "W_hh": (n, n), "b": (n,)}
    params = _cell_params(rng, shapes)
    xs = rng.normal(size=(10, n))
    target = rng.normal(size=n)

    def forward(tape, p):
        h = tape.constant(np.zeros(n))
        for x in xs:
            h = mut1_step(p, x, h, tape)
        return tape.mse(h, target, np.ones(n))

    assert grad_check(forward, params, 1e-5) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_every_primitive_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    # scale 0.5 keeps gates out of deep saturation, where gradients of ~1e-9
    # fall below central-difference roundoff
    params = ParameterSet({
        "W": rng.normal(scale=0.5, size=(4, 3)),
        "U": rng.normal(scale=0.5, size=(4, 4)),
        "b": rng.normal(scale=0.5, size=4),
    })
    x = rng.normal(size=(2, 3))
    h0 = rng.normal(size=(2, 4))
    target = rng.normal(size=(2, 4))
    mask = (rng.random((2, 4)) < 0.7).astype(float)
    mask[0, 0] = 1.0

    def forward(tape, p):
        a = tape.affine(p["W"], x, p["b"], p["U"], h0)
        s = tape.sigmoid(a)
        t = tape.tanh(a)
        m = tape.mul(s, t)
        y = tape.add(m, tape.blend(s, t, m))
        y2 = tape.affine(p["U"], y, p["b"])
        return tape.mse(y2, target, mask)

    assert grad_check(forward, params, 1e-5) < 1e-4


def test_rmsprop_zero_gradient_is_identity():
    params = ParameterSet({"a": np.array([1.0, -2.0]), "b": np.eye(2)})
    before = params.copy()
    state = OptimizerState.for_params(params)
    rmsprop_update(params, {k: np.zeros_like(v) for k, v in params.items()}, state)
    assert params.equals(before)


def test_rmsprop_first_and_second_step():
    g = 0.37
    params = ParameterSet({"a": np.array([0.0])})
    state = OptimizerState.for_params(params, lr=0.001, rho=0.9, eps=1e-8)
    rmsprop_update(params, {"a": np.array([g])}, state)
    first = -params["a"][0]
    assert first == pytest.approx(0.001 * g / math.sqrt(0.1 * g * g + 1e-8), rel=1e-12)
    assert first == pytest.approx(0.001 / math.sqrt(0.1), rel=1e-6)
    rmsprop_update(params, {"a": np.array([g])}, state)
    second = -params["a"][0] - first
    assert 0 < second < first
    assert (state.accumulators["a"] >= 0).all()


def test_rmsprop_shape_mismatch():
    params = ParameterSet({"a": np.zeros(2)})
    with pytest.raises(ShapeError):
        rmsprop_update(params, {"a": np.zeros(3)}, OptimizerState.for_params(params))


def test_parameter_set_names_unique_and_ordered():
    ps = ParameterSet()
    ps.add("b", np.zeros(2))
    ps.add("a", np.zeros((2, 2)))
    assert ps.names() == ["b", "a"]
    assert ps.count() == 6
    with pytest.raises(KeyError):
        ps.add("a", np.zeros(1))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_backward_linear_in_seed(seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(3, 2))
    x = rng.normal(size=2)
    tape = Tape()
    w = tape.param("W", W)
    out = tape.tanh(tape.affine(w, x, np.zeros(3)))
    v = rng.normal(size=3)
    g = tape.backward(out, seed=v)["W"]
    np.testing.assert_allclose(g, np.outer(v * (1 - out.value**2), x), rtol=1e-12, atol=1e-15)
