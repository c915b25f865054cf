import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpipinn import autodiff as ad
from gpipinn.autodiff import DomainError, Jet2, NonFiniteError

from oracles import fd_grad


def test_grad_bilinear():
    g = ad.grad(lambda p: p[0] * p[1], np.array([3.0, 4.0]))
    np.testing.assert_allclose(g, [4.0, 3.0])


def test_grad_tanh_at_zero():
    np.testing.assert_allclose(ad.grad(lambda p: ad.tanh(p[0]), np.array([0.0])), [1.0])


def test_grad_exp_square_matches_frozen_fd_value():
    # 1.2840254 = central difference of exp(p^2) at 0.5, step 1e-6
    g = ad.grad(lambda p: ad.exp(ad.square(p[0])), np.array([0.5]))
    assert g[0] == pytest.approx(1.2840254, abs=1e-7)


def test_grad_does_not_mutate_params():
    p = np.array([1.0, 2.0])
    before = p.copy()
    ad.grad(lambda q: ad.asum(ad.mul(q, q)), p)
    np.testing.assert_array_equal(p, before)


def test_jet_constant_square_and_exp():
    c = ad.jet2_eval(lambda h: ad.add(ad.mul(h, 0.0), 3.5))
    assert (c.val, c.d1, c.d2) == (3.5, 0.0, 0.0)
    s = ad.jet2_eval(lambda h: ad.mul(h, h))
    assert (s.val, s.d1, s.d2) == (0.0, 0.0, 2.0)
    e = ad.jet2_eval(ad.exp)
    np.testing.assert_allclose([e.val, e.d1, e.d2], [1.0, 1.0, 1.0], atol=1e-15)


def test_jet_product_rule():
    a, b = Jet2(1.5, -0.5, 2.0), Jet2(-2.0, 3.0, 0.25)
    p = a * b
    assert p.d2 == pytest.approx(a.d2 * b.val + 2 * a.d1 * b.d1 + a.val * b.d2)


def test_jet_log_of_nonpositive_raises():
    with pytest.raises(DomainError):
        ad.jet2_eval(lambda h: ad.log(ad.sub(h, 1.0)))


def test_grad_through_jet_examples():
    assert ad.grad_through_jet(lambda p: ad.mul(p[0], ad.square(Jet2.seed())), np.array([0.7]))[0] == pytest.approx(2.0)
    assert ad.grad_through_jet(lambda p: ad.mul(ad.square(p[0]), ad.square(Jet2.seed())),
                               np.array([3.0]))[0] == pytest.approx(12.0)
    g = ad.grad_through_jet(lambda p: ad.tanh(ad.mul(p[0], Jet2.seed())), np.array([1.0]))
    # psi''(0) = -2 tanh(0) p^2 = 0 for every p, so finite differences also give 0
    assert g[0] == pytest.approx(0.0, abs=1e-14)


def test_non_finite_node_is_reported():
    with pytest.raises(NonFiniteError) as info:
        ad.grad(lambda p: ad.log(ad.sub(p[0], p[0])), np.array([1.0]))
    assert info.value.op == "log"


def test_replay_is_bitwise_identical():
    tape = ad.Tape()
    x = tape.leaf(np.linspace(-1, 1, 7))
    y = ad.softplus(ad.mul(ad.tanh(x), ad.exp(x)))
    ad.asum(ad.sigmoid(y))
    values = tape.replay()
    for node, v in zip(tape.nodes, values):
        np.testing.assert_array_equal(np.asarray(node.value), np.asarray(v))


def test_softplus_is_overflow_safe():
    v = ad.softplus(np.array([-800.0, 0.0, 800.0]))
    np.testing.assert_allclose(v, [0.0, np.log(2.0), 800.0])


# primitive jets at seed (0, 1, 0) composed with an affine inner map a + b h
_PRIMS = {
    "exp": (ad.exp, lambda u: (np.exp(u), np.exp(u), np.exp(u))),
    "tanh": (ad.tanh, lambda u: (np.tanh(u), 1 - np.tanh(u) ** 2, -2 * np.tanh(u) * (1 - np.tanh(u) ** 2))),
    "sigmoid": (ad.sigmoid, lambda u: (1 / (1 + np.exp(-u)),
                                       np.exp(-u) / (1 + np.exp(-u)) ** 2,
                                       np.exp(-u) * (np.exp(-u) - 1) / (1 + np.exp(-u)) ** 3)),
    "softplus": (ad.softplus, lambda u: (np.log1p(np.exp(u)), 1 / (1 + np.exp(-u)),
                                         np.exp(-u) / (1 + np.exp(-u)) ** 2)),
    "square": (ad.square, lambda u: (u * u, 2 * u, 2.0)),
    "neg": (ad.neg, lambda u: (-u, -1.0, 0.0)),
}
_POS_PRIMS = {
    "log": (ad.log, lambda u: (np.log(u), 1 / u, -1 / u ** 2)),
    "sqrt": (ad.sqrt, lambda u: (np.sqrt(u), 0.5 / np.sqrt(u), -0.25 * u ** -1.5)),
    "reciprocal": (ad.reciprocal, lambda u: (1 / u, -1 / u ** 2, 2 / u ** 3)),
    "pow2.5": (lambda a: ad.power(a, 2.5), lambda u: (u ** 2.5, 2.5 * u ** 1.5, 3.75 * u ** 0.5)),
}


@settings(max_examples=60, deadline=None)
@given(name=st.sampled_from(sorted(_PRIMS)), a=st.floats(-3, 3), b=st.floats(-2, 2))
def test_primitive_jets_match_analytic(name, a, b):
    f, ref = _PRIMS[name]
    j = ad.jet2_eval(lambda h: f(ad.add(a, ad.mul(b, h))))
    f0, f1, f2 = ref(a)
    np.testing.assert_allclose([j.val, j.d1, j.d2], [f0, f1 * b, f2 * b * b], rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(name=st.sampled_from(sorted(_POS_PRIMS)), a=st.floats(0.2, 4), b=st.floats(-2, 2))
def test_positive_domain_jets_match_analytic(name, a, b):
    f, ref = _POS_PRIMS[name]
    j = ad.jet2_eval(lambda h: f(ad.add(a, ad.mul(b, h))))
    f0, f1, f2 = ref(a)
    np.testing.assert_allclose([j.val, j.d1, j.d2], [f0, f1 * b, f2 * b * b], rtol=1e-12, atol=1e-12)


_UNARY = [ad.tanh, ad.sigmoid, ad.softplus, lambda u: ad.mul(u, u), lambda u: ad.exp(ad.mul(0.3, u)),
          lambda u: ad.sqrt(ad.add(ad.square(u), 1.0)), lambda u: ad.log(ad.add(ad.square(u), 0.5))]


def _random_program(ops, wiring, n_params):
    """Depth <= 6 expression mixing unary maps and binary products/sums of parameters."""
    def program(p):
        acc = p[wiring[0] % n_params]
        for depth, (op, w) in enumerate(zip(ops, wiring[1:])):
            other = p[w % n_params]
            acc = _UNARY[op](acc)
            acc = ad.mul(acc, other) if depth % 2 else ad.add(acc, other)
        return acc
    return program


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 10), ops=st.lists(st.integers(0, len(_UNARY) - 1), min_size=1, max_size=6),
       data=st.data())
def test_random_program_grad_matches_central_fd(n, ops, data):
    wiring = data.draw(st.lists(st.integers(0, 9), min_size=len(ops) + 1, max_size=len(ops) + 1))
    p = np.array(data.draw(st.lists(st.floats(-1.5, 1.5), min_size=n, max_size=n)))
    prog = _random_program(ops, wiring, n)
    g = ad.grad(prog, p)
    fd = fd_grad(lambda q: float(prog(q)), p, h=1e-5)
    scale = max(1.0, np.abs(fd).max())
    assert np.abs(g - fd).max() <= 1e-4 * scale


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 6), ops=st.lists(st.integers(0, len(_UNARY) - 1), min_size=1, max_size=4), data=st.data())
def test_grad_through_jet_matches_fd_of_d2(n, ops, data):
    coef = np.array(data.draw(st.lists(st.floats(-1.0, 1.0), min_size=n, max_size=n)))

    def curve_of(p, h):
        u = ad.add(ad.mul(p[0], h), ad.mul(ad.mul(0.5, p[min(1, n - 1)]), ad.mul(h, h)))
        for i, op in enumerate(ops):
            u = ad.add(_UNARY[op](u), ad.mul(p[i % n], h))
        return u

    g = ad.grad_through_jet(lambda p: curve_of(p, Jet2.seed()), coef)
    fd = fd_grad(lambda q: float(ad.jet2_eval(lambda h: curve_of(q, h)).d2), coef, h=1e-5)
    scale = max(1.0, np.abs(fd).max())
    assert np.abs(g - fd).max() <= 1e-3 * scale


def test_matmul_of_two_jets_is_rejected():
    with pytest.raises(TypeError):
        ad.matmul(Jet2(np.ones((2, 2)), 1.0, 0.0), Jet2(np.ones((2, 2)), 1.0, 0.0))
