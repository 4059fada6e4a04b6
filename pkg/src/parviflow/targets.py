"""Target distributions: unnormalized log-densities with analytic gradients.

Every target accepts a single point of shape (dim,) or a batch of shape
(n, dim); batched calls return shapes (n,) and (n, dim). Evaluation is pure,
so concurrent calls are always safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError
from .utils import as_spd_matrix

Array = np.ndarray


@dataclass(frozen=True)
class TargetModel:
    """Unnormalized target density with an analytic score function.

    Attributes:
        dim: dimensionality of the support.
        log_density_unnorm: x -> log p(x) up to an additive constant.
        grad_log_density: x -> grad log p(x).
        name: identifier used by the CLI and in reports.
        exact_sampler: optional (rng, n) -> (n, dim) draw of exact samples,
            set for targets whose law is directly samplable.
    """

    dim: int
    log_density_unnorm: Callable[[Array], Array]
    grad_log_density: Callable[[Array], Array]
    name: str
    exact_sampler: Optional[Callable[[np.random.Generator, int], Array]] = None


def make_synthetic_2d() -> TargetModel:
    """Banana-shaped 2-D benchmark target.

    log p(x) = -0.01 * (0.5 * (x1^2 + x2^2) + 0.4 * (25 x1 + x2^2)^2), with the
    additive normalizing constant fixed to zero. Mass concentrates along the
    parabolic ridge 25 x1 + x2^2 = 0.
    """

    def log_density(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        ridge = 25.0 * x1 + x2 ** 2
        return -0.01 * (0.5 * (x1 ** 2 + x2 ** 2) + 0.4 * ridge ** 2)

    def grad_log_density(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        ridge = 25.0 * x1 + x2 ** 2
        g1 = -0.01 * (x1 + 20.0 * ridge)
        g2 = -0.01 * (x2 + 1.6 * x2 * ridge)
        return np.stack([g1, g2], axis=-1)

    return TargetModel(
        dim=2,
        log_density_unnorm=log_density,
        grad_log_density=grad_log_density,
        name="synthetic2d",
    )


def make_gaussian(mean, cov) -> TargetModel:
    """Gaussian target, log p(x) = -0.5 (x - m)^T cov^{-1} (x - m).

    ``cov`` may be a scalar (isotropic), a 1-D array (diagonal) or a full SPD
    matrix; anything non-SPD raises :class:`ConfigurationError`.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    dim = mean.shape[0]
    cov = as_spd_matrix(cov, dim, name="cov")
    cov_inv = np.linalg.inv(cov)
    cov_inv = 0.5 * (cov_inv + cov_inv.T)
    chol = np.linalg.cholesky(cov)

    def log_density(x):
        d = np.asarray(x, dtype=float) - mean
        return -0.5 * np.einsum("...i,ij,...j->...", d, cov_inv, d)

    def grad_log_density(x):
        d = np.asarray(x, dtype=float) - mean
        return -d @ cov_inv

    def exact_sampler(rng, n):
        z = rng.standard_normal((n, dim))
        return mean + z @ chol.T

    return TargetModel(
        dim=dim,
        log_density_unnorm=log_density,
        grad_log_density=grad_log_density,
        name="gaussian",
        exact_sampler=exact_sampler,
    )


def with_gaussian_momentum(target: TargetModel, sigma_inv) -> TargetModel:
    """Extend a target over theta with an independent Gaussian momentum block.

    The returned model lives on (theta, r) with
    log p(theta, r) = log p(theta) - 0.5 r^T sigma_inv r; its gradient splits
    blockwise into (grad log p(theta), -sigma_inv r).
    """
    ell = target.dim
    si = as_spd_matrix(sigma_inv, ell, name="sigma_inv")

    def log_density(x):
        x = np.asarray(x, dtype=float)
        th, r = x[..., :ell], x[..., ell:]
        return target.log_density_unnorm(th) - 0.5 * np.einsum("...i,ij,...j->...", r, si, r)

    def grad_log_density(x):
        x = np.asarray(x, dtype=float)
        th, r = x[..., :ell], x[..., ell:]
        return np.concatenate([target.grad_log_density(th), -(r @ si)], axis=-1)

    return TargetModel(
        dim=2 * ell,
        log_density_unnorm=log_density,
        grad_log_density=grad_log_density,
        name=f"{target.name}+momentum",
    )


@dataclass
class NoisyGradient:
    """Additive Gaussian perturbation of an exact gradient.

    Emulates the fluctuation a mini-batch gradient estimate introduces:
    each call returns grad log p(x) plus independent N(0, noise_std^2) noise
    per coordinate. Mutates its generator, so callers own one instance per
    worker. Duck-types the gradient surface of :class:`TargetModel` and can
    stand in for one inside any sampler.
    """

    base: TargetModel
    noise_std: float
    rng: np.random.Generator

    @classmethod
    def from_seed(cls, base: TargetModel, noise_std: float, seed: int) -> "NoisyGradient":
        if noise_std < 0:
            raise ConfigurationError("noise_std must be nonnegative")
        return cls(base=base, noise_std=noise_std, rng=np.random.default_rng(seed))

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def name(self) -> str:
        return self.base.name

    def log_density_unnorm(self, x):
        return self.base.log_density_unnorm(x)

    def grad_log_density(self, x):
        g = self.base.grad_log_density(x)
        return g + self.noise_std * self.rng.standard_normal(np.shape(g))


def noisy_grad(ng: NoisyGradient, x) -> Array:
    """One noisy gradient draw at ``x``; advances the generator state."""
    return ng.grad_log_density(x)


_BUILTIN_TARGETS = {
    "synthetic2d": lambda params: make_synthetic_2d(),
    "gaussian": lambda params: make_gaussian(
        params.get("mean", (0.0, 0.0)), params.get("cov", 1.0)
    ),
}


def make_target(name: str, params: dict | None = None) -> TargetModel:
    """Build a target by config name ("synthetic2d" or "gaussian")."""
    if name not in _BUILTIN_TARGETS:
        raise ConfigurationError(
            f"unknown target '{name}'; available: {sorted(_BUILTIN_TARGETS)}"
        )
    return _BUILTIN_TARGETS[name](params or {})
