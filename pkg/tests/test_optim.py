import numpy as np
import pytest

from ditreg import tensor as T
from ditreg.optim import DEFAULT_LR, Adam, AdamState, NonFiniteGradient, adam_step


def reference_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return p


def test_matches_textbook_update(rng):
    p0 = rng.normal(size=(3, 4))
    grads = [rng.normal(size=(3, 4)) for _ in range(5)]
    params = {"w": T.tensor(p0.copy())}
    state = AdamState()
    for g in grads:
        adam_step(params, {"w": g}, state, lr=0.01)
    np.testing.assert_allclose(params["w"].data, reference_adam(p0, grads, 0.01), rtol=1e-13)
    assert state.step == 5


def test_first_step_moves_by_lr():
    params = {"w": T.tensor(np.zeros(3))}
    adam_step(params, {"w": np.array([2.0, -3.0, 0.5])}, AdamState(), lr=0.1)
    np.testing.assert_allclose(params["w"].data, [-0.1, 0.1, -0.1], rtol=1e-6)


def test_default_lr():
    assert DEFAULT_LR == 3e-5


def test_zero_lr_leaves_params(rng):
    params = {"w": T.tensor(rng.normal(size=4))}
    before = params["w"].data.copy()
    adam_step(params, {"w": rng.normal(size=4)}, AdamState(), lr=0.0)
    assert np.array_equal(params["w"].data, before)


def test_non_finite_gradient_aborts_before_update():
    params = {"a": T.tensor(np.ones(2)), "b": T.tensor(np.ones(2))}
    with pytest.raises(NonFiniteGradient):
        adam_step(params, {"a": np.ones(2), "b": np.array([np.nan, 0.0])}, AdamState(), lr=1.0)
    assert np.array_equal(params["a"].data, np.ones(2))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step({"a": T.tensor(np.ones(2))}, {"a": np.ones(3)}, AdamState())


def test_adam_minimises_quadratic():
    w = T.tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam({"w": w}, lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        T.backward(T.sum(T.square(w)))
        opt.step()
    assert np.abs(w.data).max() < 1e-2
