import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpipinn.network import NetworkArch, ParameterVector
from gpipinn.optim import AdamState, adam_step


def _params(values):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    arch = NetworkArch("feedforward", input_dim=1, L=1, N=1)
    # reuse a 4-parameter arch and pad/crop for generic vectors
    n = arch.n_params()
    return ParameterVector(arch, np.resize(values, n))


def test_zero_gradient_leaves_params_and_increments_step():
    p = _params([0.3, -0.2, 1.0, 2.0])
    s = AdamState.zeros(len(p))
    q, s2 = adam_step(s, p, np.zeros(len(p)), 1e-3)
    np.testing.assert_array_equal(q.values, p.values)
    assert s2.step == 1


def test_first_step_moves_by_learning_rate():
    p = _params([0.0, 0.0, 0.0, 0.0])
    s = AdamState.zeros(len(p))
    q, _ = adam_step(s, p, np.ones(len(p)), 1e-3)
    # m_hat = 1, v_hat = 1 -> step lr * 1 / (1 + 1e-8)
    np.testing.assert_allclose(q.values, -1e-3 / (1 + 1e-8), rtol=1e-12)


def test_constant_gradient_second_step_not_larger():
    p = _params([1.0, 1.0, 1.0, 1.0])
    s = AdamState.zeros(len(p))
    g = np.full(len(p), 0.37)
    p1, s = adam_step(s, p, g, 1e-3)
    p2, s = adam_step(s, p1, g, 1e-3)
    first = np.abs(p1.values - p.values)
    second = np.abs(p2.values - p1.values)
    assert np.all(second <= first * (1 + 1e-6))


def test_non_finite_gradient_raises():
    p = _params([0.0] * 4)
    with pytest.raises(FloatingPointError):
        adam_step(AdamState.zeros(len(p)), p, np.array([0.0, np.nan, 0.0, 0.0]), 1e-3)


def test_length_mismatch_and_bad_lr():
    p = _params([0.0] * 4)
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros(3), p, np.zeros(4), 1e-3)
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros(4), p, np.zeros(4), 0.0)


@settings(max_examples=50, deadline=None)
@given(g=st.lists(st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3), min_size=4, max_size=4),
       c=st.floats(0.01, 100.0))
def test_first_step_is_scale_invariant(g, c):
    p = _params([0.5, -0.5, 0.25, 2.0])
    g = np.array(g)
    state = AdamState.zeros(4)
    a, _ = adam_step(state, p, g, 1e-3)
    b, _ = adam_step(state, p, c * g, 1e-3)
    # the first step is -lr g / (|g| + eps): a unit-size move whatever the scale, up to eps / |g|
    for scale, moved in ((1.0, a), (c, b)):
        sg = scale * g
        np.testing.assert_allclose(moved.values - p.values, -1e-3 * sg / (np.abs(sg) + state.eps), rtol=1e-12)
    bound = 1e-3 * state.eps / np.abs(min(c, 1.0) * g)
    assert np.all(np.abs((a.values - p.values) - (b.values - p.values)) <= bound * (1 + 1e-9) + 1e-18)


@settings(max_examples=30, deadline=None)
@given(steps=st.lists(st.lists(st.floats(-5, 5), min_size=4, max_size=4), min_size=1, max_size=6))
def test_state_invariants(steps):
    p = _params([0.0] * 4)
    s = AdamState.zeros(4)
    for i, g in enumerate(steps, 1):
        p, s = adam_step(s, p, np.array(g), 1e-3)
        assert s.step == i
        assert np.all(s.v >= 0)
        assert s.m.shape == s.v.shape == (4,)


def test_deterministic():
    p = _params([0.1, 0.2, 0.3, 0.4])
    s = AdamState.zeros(4)
    g = np.array([1.0, -2.0, 0.5, 0.0])
    a = adam_step(s, p, g, 1e-3)
    b = adam_step(s, p, g, 1e-3)
    np.testing.assert_array_equal(a[0].values, b[0].values)
    np.testing.assert_array_equal(a[1].m, b[1].m)
