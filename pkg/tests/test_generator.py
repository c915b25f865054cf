import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpipinn import autodiff as ad
from gpipinn.generator import extended_hamiltonian_mc, g_tilde, g_value, psi_second
from gpipinn.network import NetworkArch, Network, init_params
from gpipinn.problem import ProblemSpec

from oracles import Cubic, generator_oracle, generic_spec


def _scalar_spec(beta=0.0, sigma=0.0, lam=0.0, f=0.0):
    def col(v):
        return lambda *args: np.full((np.shape(ad.value_of(args[1]))[0], 1), float(v))

    return ProblemSpec(
        name="toy", d=1, k=1, l=1, m=1, T=1.0,
        drift=lambda t, x, a: np.full(np.shape(ad.value_of(x)), float(beta)),
        diffusion=lambda t, x, a: [np.full(np.shape(ad.value_of(x)), float(sigma))],
        jump=lambda t, x, z, a: z,
        intensity=col(lam),
        running_reward=col(f),
        terminal_reward=lambda x: np.zeros((np.shape(x)[0], 1)),
        mark_sampler=lambda rng, n: rng.normal(size=(n, 1)),
        has_jumps=True,
    )


def _square(t, x):
    return ad.mul(x, x)


T0, X1, A0 = np.array([[0.2]]), np.array([[1.0]]), np.zeros((1, 1))


def test_psi_constant_is_zero():
    spec = _scalar_spec(beta=1.3, sigma=0.4)
    v = lambda t, x: ad.add(ad.mul(x, 0.0), 2.0)
    assert float(psi_second(v, T0, X1, A0, spec)[0, 0]) == 0.0


def test_psi_polynomial_example():
    spec = _scalar_spec(beta=1.0, sigma=2.0)
    out = psi_second(_square, T0, np.array([[3.0]]), A0, spec)
    assert float(out[0, 0]) == pytest.approx(10.0, abs=1e-12)


def test_psi_time_only():
    spec = _scalar_spec(beta=-4.0, sigma=3.0)
    out = psi_second(lambda t, x: ad.add(t, ad.mul(x, 0.0)), T0, X1, A0, spec)
    assert float(out[0, 0]) == pytest.approx(1.0, abs=1e-14)


def test_extended_hamiltonian_without_intensity():
    spec = _scalar_spec(beta=1.0, sigma=2.0, lam=0.0, f=0.7)
    marks = np.array([[5.0], [-2.0]])
    H = extended_hamiltonian_mc(_square, T0, np.array([[3.0]]), A0, marks, spec)
    assert float(H[0, 0]) == pytest.approx(10.7, abs=1e-12)


def test_extended_hamiltonian_single_mark_hand_value():
    spec = _scalar_spec(lam=1.0)
    H = extended_hamiltonian_mc(_square, T0, X1, A0, np.array([[1.0]]), spec)
    assert float(H[0, 0]) == pytest.approx(3.0)
    dup = extended_hamiltonian_mc(_square, T0, X1, A0, np.array([[1.0], [1.0]]), spec)
    assert float(dup[0, 0]) == pytest.approx(3.0)


def test_extended_hamiltonian_requires_marks():
    spec = _scalar_spec(lam=1.0)
    with pytest.raises(ValueError):
        extended_hamiltonian_mc(_square, T0, X1, A0, np.empty((0, 1)), spec)


def test_g_value_examples():
    spec0 = _scalar_spec()
    assert float(g_value(_square, T0, np.array([[1.7]]), np.array([[0.3]]), A0, spec0)[0, 0]) == pytest.approx(1.7 ** 2)
    spec = _scalar_spec(lam=1.0)
    assert float(g_value(_square, T0, X1, np.array([[1.0]]), A0, spec)[0, 0]) == pytest.approx(4.0)
    assert float(g_tilde(_square, T0, X1, np.array([[1.0]]), A0, spec)[0, 0]) == pytest.approx(3.0)


def test_g_tilde_without_jumps_equals_hamiltonian():
    spec = _scalar_spec(beta=0.5, sigma=1.5, lam=0.0, f=0.2)
    x = np.array([[0.4], [-1.0]])
    t = np.array([[0.1], [0.9]])
    a = np.zeros((2, 1))
    H = extended_hamiltonian_mc(_square, t, x, a, np.array([[9.0]]), spec)
    for z in (-3.0, 0.5):
        np.testing.assert_allclose(g_tilde(_square, t, x, np.full((2, 1), z), a, spec), H, atol=1e-14)


def test_mark_average_of_g_tilde_is_extended_hamiltonian():
    spec = _scalar_spec(beta=0.3, sigma=0.8, lam=0.6, f=0.1)
    rng = np.random.default_rng(0)
    marks = rng.normal(size=(7, 1))
    v = lambda t, x: ad.add(ad.tanh(x), ad.mul(t, ad.square(x)))
    H = extended_hamiltonian_mc(v, T0, X1, A0, marks, spec)
    avg = np.mean([float(g_tilde(v, T0, X1, z.reshape(1, 1), A0, spec)[0, 0]) for z in marks])
    assert float(H[0, 0]) == pytest.approx(avg, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(d=st.integers(1, 5), k=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_psi_matches_analytic_generator_for_cubics(d, k, seed):
    rng = np.random.default_rng(seed)
    B = 6
    v = Cubic(d, rng)
    t = rng.uniform(0, 1, size=(B, 1))
    x = rng.normal(size=(B, d))
    beta = rng.normal(size=(B, d))
    sigma = rng.normal(size=(B, d, k))
    spec = generic_spec(d, k, beta, sigma)
    got = psi_second(v, t, x, np.zeros((B, d)), spec)
    want = v.generator(t, x, beta, sigma)
    np.testing.assert_allclose(got, want, atol=1e-8 * max(1.0, np.abs(want).max()), rtol=0)


@settings(max_examples=15, deadline=None)
@given(d=st.integers(1, 3), k=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_psi_matches_explicit_hessian_oracle_on_networks(d, k, seed):
    rng = np.random.default_rng(seed)
    B = 5
    arch = NetworkArch("dgm", input_dim=d + 1, L=1, N=6)
    net = Network(init_params(arch, seed))
    t = rng.uniform(0, 1, size=(B, 1))
    x = rng.normal(size=(B, d))
    beta = rng.normal(size=(B, d))
    sigma = rng.normal(size=(B, d, k))
    spec = generic_spec(d, k, beta, sigma)
    got = psi_second(net, t, x, np.zeros((B, d)), spec)
    want = generator_oracle(net, t, x, beta, sigma)
    np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-10)


def test_fubini_standard_error_scales_like_inverse_sqrt_m3():
    spec = _scalar_spec(beta=0.2, sigma=0.5, lam=1.0)
    v = lambda t, x: ad.add(ad.square(x), ad.tanh(x))
    x = np.full((400, 1), 0.3)
    t = np.full((400, 1), 0.5)
    a = np.zeros((400, 1))
    rng = np.random.default_rng(1)
    spread = []
    for M3 in (16, 256):
        H = extended_hamiltonian_mc(v, t, x, a, rng.normal(size=(400, M3, 1)), spec)
        spread.append(float(np.std(H)))
    ratio = spread[0] / spread[1]
    assert 4 / 2 <= ratio <= 4 * 2
