import math

import numpy as np
import pytest

from taskalloc.optimizer import (
    GradientOracle,
    QuadraticProblem,
    default_step,
    grad,
    minibatch_grad,
    noisy_grad,
    sgd_step,
    suboptimality,
)


def dense_A(d):
    return (2 * np.eye(d) - np.eye(d, k=1) - np.eye(d, k=-1)) / 4


def test_minimizer_closed_form():
    # A x = b with b = -e1/4 has the linear solution x_i = -(d + 1 - i) / (d + 1)
    for d in (1, 2, 5, 100):
        p = QuadraticProblem(d)
        i = np.arange(1, d + 1)
        np.testing.assert_allclose(p.x_star, -(d + 1 - i) / (d + 1), atol=1e-12)
        assert p.f_star == pytest.approx(-d / (8 * (d + 1)), rel=1e-12)


def test_minimizer_against_dense_solve():
    p = QuadraticProblem(30)
    np.testing.assert_allclose(p.x_star, np.linalg.solve(dense_A(30), p.b), atol=1e-12)


def test_value_and_grad_small_example():
    p = QuadraticProblem(2)
    x = np.array([1.0, -2.0])
    # A = [[.5,-.25],[-.25,.5]]; Ax = [1, -1.25]; f = .5*(1 + 2.5) + .25 = 2.0
    assert p.value(x) == pytest.approx(2.0)
    np.testing.assert_allclose(grad(p, x), [1.25, -1.25])


def test_eigenvalue_bounds_match_dense():
    p = QuadraticProblem(40)
    ev = np.linalg.eigvalsh(dense_A(40))
    assert p.lambda_max == pytest.approx(ev.max(), rel=1e-12)
    assert p.lambda_min == pytest.approx(ev.min(), rel=1e-9)


def test_grad_matches_finite_differences():
    p = QuadraticProblem(100)
    rng = np.random.default_rng(0)
    h = 1e-4
    for _ in range(100):
        x = rng.normal(size=100)
        v = rng.normal(size=100)
        v /= np.linalg.norm(v)
        fd = (p.value(x + h * v) - p.value(x - h * v)) / (2 * h)
        exact = grad(p, x) @ v
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


def test_grad_zero_at_minimizer():
    p = QuadraticProblem(50)
    assert np.linalg.norm(grad(p, p.x_star)) < 1e-12


def test_wrong_shape_rejected():
    p = QuadraticProblem(5)
    with pytest.raises(ValueError):
        grad(p, np.zeros(4))
    with pytest.raises(ValueError):
        QuadraticProblem(0)


def test_noisy_gradient_variance():
    p = QuadraticProblem(100)
    oracle = GradientOracle(0.01)
    rng = np.random.default_rng(1)
    x = rng.normal(size=100)
    g = grad(p, x)
    dev = np.array([np.sum((noisy_grad(p, oracle, x, rng) - g) ** 2) for _ in range(20_000)])
    se = dev.std() / math.sqrt(dev.size)
    assert abs(dev.mean() - 0.01**2) <= 3 * se


def test_minibatch_variance_scales_with_batch():
    p = QuadraticProblem(20)
    oracle = GradientOracle(1.0)
    rng = np.random.default_rng(2)
    x = np.zeros(20)
    g = grad(p, x)
    dev = np.array([np.sum((minibatch_grad(p, oracle, x, 8, rng) - g) ** 2) for _ in range(20_000)])
    se = dev.std() / math.sqrt(dev.size)
    assert abs(dev.mean() - 1.0 / 8) <= 3 * se


def test_zero_noise_is_exact():
    p = QuadraticProblem(10)
    x = np.ones(10)
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(noisy_grad(p, GradientOracle(0.0), x, rng), grad(p, x))
    with pytest.raises(ValueError):
        GradientOracle(-1.0)


def test_gradient_descent_monotone():
    p = QuadraticProblem(100)
    gamma = default_step(p)
    x = np.zeros(100)
    prev = p.value(x)
    for _ in range(2000):
        x = x - gamma * grad(p, x)
        cur = p.value(x)
        assert cur <= prev + 1e-15
        prev = cur


def test_sgd_step_averages():
    x = np.array([1.0, 1.0])
    out = sgd_step(x, [np.array([1.0, 0.0]), np.array([3.0, 2.0])], 0.5, 2)
    np.testing.assert_allclose(out, [0.0, 0.5])
    with pytest.raises(ValueError):
        sgd_step(x, [np.zeros(2)], 0.5, 2)


def test_suboptimality_nonnegative_and_zero_at_optimum():
    p = QuadraticProblem(30)
    assert suboptimality(p, p.x_star) == 0.0
    assert suboptimality(p, np.zeros(30)) == pytest.approx(-p.f_star)


def test_sgd_reaches_threshold():
    p = QuadraticProblem(10)
    oracle = GradientOracle(0.01)
    rng = np.random.default_rng(4)
    gamma = default_step(p)
    x = np.zeros(10)
    for _ in range(3000):
        x = x - gamma * minibatch_grad(p, oracle, x, 23, rng)
    assert suboptimality(p, x) < 1e-5
