"""Tridiagonal quadratic test problem and minibatch SGD."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

DIAG = 0.5  # A = 1/4 * tridiag(-1, 2, -1)
OFF = -0.25


@dataclass(frozen=True)
class QuadraticProblem:
    """``f(x) = 1/2 x^T A x - b^T x`` with ``A = tridiag(-1, 2, -1) / 4`` and ``b = -e_1 / 4``."""

    d: int = 100
    b: np.ndarray = field(init=False, repr=False)
    x_star: np.ndarray = field(init=False, repr=False)
    f_star: float = field(init=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        b = np.zeros(self.d)
        b[0] = -0.25
        bands = np.empty((3, self.d))
        bands[0] = OFF
        bands[1] = DIAG
        bands[2] = OFF
        x_star = solve_banded((1, 1), bands, b)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x_star", x_star)
        object.__setattr__(self, "f_star", float(-0.5 * b @ x_star))

    @property
    def lambda_max(self):
        # eigenvalues of A: (1 - cos(j pi / (d + 1))) / 2, j = 1..d
        return 0.5 * (1.0 - math.cos(self.d * math.pi / (self.d + 1)))

    @property
    def lambda_min(self):
        return 0.5 * (1.0 - math.cos(math.pi / (self.d + 1)))

    def matvec(self, x):
        y = DIAG * x
        y[1:] += OFF * x[:-1]
        y[:-1] += OFF * x[1:]
        return y

    def value(self, x):
        x = _check(self, x)
        return float(0.5 * x @ self.matvec(x) - self.b @ x)


def _check(problem, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.d,):
        raise ValueError(f"expected a vector of length {problem.d}, got shape {x.shape}")
    return x


def grad(problem: QuadraticProblem, x) -> np.ndarray:
    x = _check(problem, x)
    return problem.matvec(x) - problem.b


@dataclass(frozen=True)
class GradientOracle:
    """Unbiased gradients with isotropic Gaussian noise, ``E||g - grad f||^2 = sigma^2``."""

    sigma: float = 0.01

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")


def noisy_grad(problem, oracle: GradientOracle, x, rng) -> np.ndarray:
    g = grad(problem, x)
    if oracle.sigma == 0:
        return g
    return g + rng.normal(0.0, oracle.sigma / math.sqrt(problem.d), size=problem.d)


def minibatch_grad(problem, oracle: GradientOracle, x, batch: int, rng) -> np.ndarray:
    """Average of ``batch`` independent noisy gradients at ``x``.

    Draws the averaged noise directly (Gaussian, variance
    ``sigma^2 / (d * batch)`` per coordinate), which has the same law as
    averaging ``batch`` calls of ``noisy_grad``.
    """
    g = grad(problem, x)
    if oracle.sigma == 0:
        return g
    return g + rng.normal(0.0, oracle.sigma / math.sqrt(problem.d * batch), size=problem.d)


def sgd_step(x, gradients, gamma: float, batch: int) -> np.ndarray:
    if len(gradients) != batch:
        raise ValueError(f"expected {batch} gradients, got {len(gradients)}")
    return np.asarray(x, dtype=float) - gamma * np.mean(gradients, axis=0)


def suboptimality(problem: QuadraticProblem, x) -> float:
    gap = problem.value(x) - problem.f_star
    # tiny negative values are rounding noise around the minimiser
    return max(gap, 0.0)


def default_step(problem: QuadraticProblem) -> float:
    return 1.0 / problem.lambda_max
