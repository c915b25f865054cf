import numpy as np
import pytest

from gpipinn import autodiff as ad
from gpipinn.problem import ConsumptionConfig, LqrConfig, consumption_problem, lqr_problem, sample_jump


def test_lqr_intensity_zero_without_action():
    spec = lqr_problem(LqrConfig(d=1, Lambda1=0.0, Lambda2=2.0))
    lam = spec.intensity(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    assert float(lam[0, 0]) == 0.0


def test_lqr_running_and_terminal_reward():
    spec = lqr_problem(LqrConfig(d=1, c1=1.0))
    assert float(spec.running_reward(np.zeros((1, 1)), np.zeros((1, 1)), np.array([[3.0]]))[0, 0]) == 9.0
    spec2 = lqr_problem(LqrConfig(d=2, c2=0.25))
    assert float(spec2.terminal_reward(np.array([[1.0, 2.0]]))[0, 0]) == pytest.approx(1.25)
    assert spec.sense == "minimize" and spec.sign == -1.0


def test_lqr_rejects_negative_intensity_coefficients():
    with pytest.raises(ValueError):
        LqrConfig(d=1, Lambda1=-0.1)
    with pytest.raises(ValueError):
        LqrConfig(d=2, Sigma_J=np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_lqr_intensity_nonnegative_for_any_action():
    rng = np.random.default_rng(0)
    spec = lqr_problem(LqrConfig(d=3, Lambda1=0.1, Lambda2=0.7))
    a = rng.normal(scale=5, size=(100, 3))
    assert np.all(np.asarray(spec.intensity(None, np.zeros((100, 3)), a)) >= 0)


def test_lqr_zeta_is_trace():
    cfg = LqrConfig(d=3, matrix_seed=4)
    assert cfg.zeta == pytest.approx(np.trace(cfg.Sigma_J))
    B = cfg.jump_factor()
    np.testing.assert_allclose(B @ B.T, cfg.Sigma_J, atol=1e-12)


def test_consumption_drift_riskless_growth():
    cfg = ConsumptionConfig(n=1)
    spec = consumption_problem(cfg)
    y = np.array([[10.0], [3.0]])
    beta = spec.drift(None, y, np.zeros((2, 2)))
    np.testing.assert_allclose(beta, cfg.r * y)


def test_consumption_zero_mark_gives_zero_jump():
    spec = consumption_problem(ConsumptionConfig(n=2))
    g = spec.jump(None, np.array([[5.0]]), np.zeros((1, 2)), np.array([[0.3, 0.4, 0.1]]))
    assert float(g[0, 0]) == 0.0


def test_consumption_total_intensity():
    spec = consumption_problem(ConsumptionConfig(n=1))
    assert float(spec.intensity(None, np.array([[1.0]]), np.array([[0.5, 0.5]]))[0, 0]) == pytest.approx(0.45)


def test_consumption_nonpositive_wealth_raises():
    spec = consumption_problem(ConsumptionConfig(n=1))
    with pytest.raises(ad.DomainError):
        spec.drift(None, np.array([[0.0]]), np.array([[0.5, 0.5]]))


def test_consumption_reward_discounting():
    cfg = ConsumptionConfig(n=1)
    spec = consumption_problem(cfg)
    t, y, a = np.array([[0.5]]), np.array([[8.0]]), np.array([[0.2, 0.25]])
    f = float(spec.running_reward(t, y, a)[0, 0])
    assert f == pytest.approx(np.exp(-cfg.rho * 0.5) * (0.25 * 8.0) ** cfg.gamma_crra / cfg.gamma_crra)
    F = float(spec.terminal_reward(y)[0, 0])
    assert F == pytest.approx(np.exp(-cfg.rho * cfg.T) * 8.0 ** cfg.gamma_crra / cfg.gamma_crra)


def test_sample_jump_lqr_mean():
    spec = lqr_problem(LqrConfig(d=2, Sigma_J=np.eye(2)))
    z = sample_jump(spec, 100_000, 1)
    assert np.all(np.abs(z.mean(axis=0)) <= 3 * np.sqrt(1 / 100_000))


def test_sample_jump_degenerate_rejected():
    spec = lqr_problem(LqrConfig(d=2, Sigma_J=np.zeros((2, 2)), Lambda1=1.0))
    with pytest.raises(ValueError):
        sample_jump(spec, 10, 0)


def test_sample_jump_consumption_scalar_normals():
    spec = consumption_problem(ConsumptionConfig(n=1))
    z = sample_jump(spec, 50_000, 3)
    assert z.shape == (50_000, 1)
    assert abs(z.mean() - 0.25) <= 3 * 0.2 / np.sqrt(50_000)
    np.testing.assert_array_equal(sample_jump(spec, 10, 5), sample_jump(spec, 10, 5))


def test_consumption_mixture_marks_single_asset():
    spec = consumption_problem(ConsumptionConfig(n=3))
    z = sample_jump(spec, 1000, 2)
    assert np.all(np.count_nonzero(z, axis=1) == 1)


def test_wealth_stays_positive_after_euler_step():
    cfg = ConsumptionConfig(n=2)
    spec = consumption_problem(cfg)
    rng = np.random.default_rng(0)
    B, dt = 5000, 1e-3
    y = rng.uniform(0.1, 150, size=(B, 1))
    a = rng.uniform(0.01, 0.99, size=(B, 3))
    z = spec.mark_sampler(rng, B)
    t = np.zeros((B, 1))
    dW = rng.normal(scale=np.sqrt(dt), size=(B, 2))
    cols = spec.diffusion(t, y, a)
    y_new = y + spec.drift(t, y, a) * dt + sum(c * dW[:, j:j + 1] for j, c in enumerate(cols)) + spec.jump(t, y, z, a)
    assert np.all(y_new > 0)


def test_lqr_training_box_option():
    default = lqr_problem(LqrConfig(d=2))
    assert default.interior_measure.kind == "gaussian_sqrt_t"
    boxed = lqr_problem(LqrConfig(d=2, train_half_width=3.5))
    assert boxed.interior_measure.kind == boxed.terminal_measure.kind == "uniform_box"
    assert boxed.interior_measure.box == ((-3.5, 3.5), (-3.5, 3.5))
    assert boxed.test_box == default.test_box
    with pytest.raises(ValueError):
        LqrConfig(d=1, train_half_width=-1.0)
