"""Tests for the target distributions and the noisy-gradient wrapper."""

import numpy as np
import pytest

from parviflow import (
    ConfigurationError,
    NoisyGradient,
    make_gaussian,
    make_synthetic_2d,
    make_target,
    noisy_grad,
    with_gaussian_momentum,
)


def central_difference_grad(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        out[i] = (f(x + step) - f(x - step)) / (2 * h)
    return out


class TestSynthetic2D:
    def test_value_at_origin(self):
        target = make_synthetic_2d()
        assert target.log_density_unnorm(np.zeros(2)) == 0.0

    def test_gradient_at_origin(self):
        target = make_synthetic_2d()
        np.testing.assert_array_equal(target.grad_log_density(np.zeros(2)), np.zeros(2))

    def test_hand_value(self):
        # -0.01 * (0.5 + 0.4 * 625) at (1, 0)
        target = make_synthetic_2d()
        assert target.log_density_unnorm(np.array([1.0, 0.0])) == pytest.approx(-2.505)

    def test_batched_evaluation(self):
        target = make_synthetic_2d()
        pts = np.random.default_rng(0).uniform(-3, 3, size=(7, 2))
        vals = target.log_density_unnorm(pts)
        grads = target.grad_log_density(pts)
        assert vals.shape == (7,)
        assert grads.shape == (7, 2)
        for k in range(7):
            assert vals[k] == pytest.approx(target.log_density_unnorm(pts[k]))
            np.testing.assert_allclose(grads[k], target.grad_log_density(pts[k]))

    def test_finite_everywhere(self):
        target = make_synthetic_2d()
        pts = np.random.default_rng(1).uniform(-50, 50, size=(100, 2))
        assert np.all(np.isfinite(target.log_density_unnorm(pts)))


class TestGaussian:
    def test_identity_covariance_gradient(self):
        target = make_gaussian((0, 0), np.eye(2))
        np.testing.assert_array_equal(
            target.grad_log_density(np.array([1.0, 2.0])), [-1.0, -2.0]
        )

    def test_gradient_zero_at_mean(self):
        target = make_gaussian((3,), (4,))
        np.testing.assert_array_equal(target.grad_log_density(np.array([3.0])), [0.0])

    def test_diagonal_covariance(self):
        target = make_gaussian((0, 0), np.array([2.0, 0.5]))
        np.testing.assert_allclose(
            target.grad_log_density(np.array([2.0, 1.0])), [-1.0, -2.0]
        )

    def test_non_spd_rejected(self):
        with pytest.raises(ConfigurationError):
            make_gaussian((0, 0), np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(ConfigurationError):
            make_gaussian((0, 0), np.array([[1.0, 0.5], [-0.5, 1.0]]))

    def test_exact_sampler_moments(self):
        target = make_gaussian((1.0, -2.0), np.diag([0.5, 2.0]))
        sample = target.exact_sampler(np.random.default_rng(5), 20_000)
        np.testing.assert_allclose(sample.mean(axis=0), [1.0, -2.0], atol=0.05)
        np.testing.assert_allclose(np.var(sample, axis=0), [0.5, 2.0], rtol=0.05)


@pytest.mark.parametrize(
    "target",
    [
        make_synthetic_2d(),
        make_gaussian((0.5, -1.0), np.array([[1.5, 0.4], [0.4, 0.8]])),
        make_gaussian((0.0,), (2.0,)),
    ],
    ids=["synthetic2d", "gaussian-full", "gaussian-1d"],
)
def test_gradient_matches_central_differences(target):
    rng = np.random.default_rng(42)
    for _ in range(100):
        x = rng.uniform(-10, 10, size=target.dim)
        numeric = central_difference_grad(target.log_density_unnorm, x)
        analytic = target.grad_log_density(x)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-6)


class TestMomentumAugmentation:
    def test_blockwise_gradient(self):
        base = make_synthetic_2d()
        aug = with_gaussian_momentum(base, np.eye(2))
        x = np.array([0.3, -0.7, 1.0, 2.0])
        expected = np.concatenate([base.grad_log_density(x[:2]), -x[2:]])
        np.testing.assert_allclose(aug.grad_log_density(x), expected)
        assert aug.dim == 4

    def test_log_density_splits(self):
        base = make_gaussian((0, 0), np.eye(2))
        aug = with_gaussian_momentum(base, 2.0 * np.eye(2))
        x = np.array([1.0, 0.0, 0.5, -0.5])
        expected = base.log_density_unnorm(x[:2]) - 0.5 * 2.0 * (0.25 + 0.25)
        assert aug.log_density_unnorm(x) == pytest.approx(expected)


class TestNoisyGradient:
    def test_zero_noise_is_exact(self):
        base = make_synthetic_2d()
        ng = NoisyGradient.from_seed(base, 0.0, seed=3)
        x = np.array([0.4, 1.2])
        np.testing.assert_array_equal(noisy_grad(ng, x), base.grad_log_density(x))

    def test_two_calls_differ(self):
        base = make_synthetic_2d()
        ng = NoisyGradient.from_seed(base, 1.0, seed=3)
        x = np.array([0.4, 1.2])
        assert not np.array_equal(noisy_grad(ng, x), noisy_grad(ng, x))

    def test_same_seed_reproduces(self):
        base = make_synthetic_2d()
        x = np.array([0.4, 1.2])
        a = noisy_grad(NoisyGradient.from_seed(base, 1.0, seed=9), x)
        b = noisy_grad(NoisyGradient.from_seed(base, 1.0, seed=9), x)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.slow
    def test_monte_carlo_mean(self):
        # mean of 1e6 draws at (1, 0) within 0.01 of the analytic gradient
        base = make_synthetic_2d()
        ng = NoisyGradient.from_seed(base, 1.0, seed=7)
        x = np.tile([1.0, 0.0], (1_000_000, 1))
        draws = noisy_grad(ng, x)
        np.testing.assert_allclose(
            draws.mean(axis=0), base.grad_log_density(np.array([1.0, 0.0])), atol=0.01
        )

    def test_unbiased_at_five_sigma(self):
        base = make_gaussian((0, 0), np.eye(2))
        ng = NoisyGradient.from_seed(base, 0.5, seed=11)
        n = 100_000
        x = np.tile([0.3, -0.6], (n, 1))
        draws = noisy_grad(ng, x)
        err = np.abs(draws.mean(axis=0) - base.grad_log_density(np.array([0.3, -0.6])))
        assert np.all(err < 5 * 0.5 / np.sqrt(n))


def test_make_target_by_name():
    assert make_target("synthetic2d").name == "synthetic2d"
    gauss = make_target("gaussian", {"mean": [1.0, 2.0], "cov": 2.0})
    assert gauss.dim == 2
    with pytest.raises(ConfigurationError):
        make_target("nope")
