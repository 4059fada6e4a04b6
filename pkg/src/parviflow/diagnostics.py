"""Distance diagnostics between ensembles and targets: MMD, exact W2, moments.

Reductions over kernel blocks sort before summing, so every metric is
bit-reproducible and invariant to row permutations of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize
from scipy.spatial.distance import cdist

from .errors import ConfigurationError
from .smoothing import KernelConfig, select_bandwidth
from .targets import TargetModel

Array = np.ndarray

W2_EXACT_CAP = 512

_SYNTHETIC_BOX = (-7.0, 3.0, -9.0, 9.0)


@dataclass
class MetricReport:
    """Per-checkpoint metric row; ``w2`` is absent above the exact-solver cap."""

    iteration: int
    mmd: float
    w2: Optional[float]
    mean: Array
    cov: Array


def _sorted_sum(block: Array) -> float:
    return float(np.sum(np.sort(block.ravel())))


def mmd(a: Array, b: Array, kernel: KernelConfig = KernelConfig()) -> float:
    """Kernel two-sample distance sqrt(max(0, mean K_aa + mean K_bb - 2 mean K_ab)).

    The biased estimator keeps the value nonnegative. Under the median policy
    the bandwidth is selected on the pooled sample.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise ConfigurationError("mmd needs nonempty samples")
    h = select_bandwidth(kernel, np.vstack([a, b]))
    gamma = 1.0 / (2.0 * h ** 2)
    k_aa = np.exp(-gamma * cdist(a, a, "sqeuclidean"))
    k_bb = np.exp(-gamma * cdist(b, b, "sqeuclidean"))
    k_ab = np.exp(-gamma * cdist(a, b, "sqeuclidean"))
    sq = (
        _sorted_sum(k_aa) / a.shape[0] ** 2
        + _sorted_sum(k_bb) / b.shape[0] ** 2
        - 2.0 * _sorted_sum(k_ab) / (a.shape[0] * b.shape[0])
    )
    return float(np.sqrt(max(0.0, sq)))


def w2_exact(a: Array, b: Array) -> float:
    """Exact quadratic transport distance between equal-size point sets.

    Solves the assignment problem on squared distances and returns
    sqrt(min_perm mean |a_i - b_perm(i)|^2). Capped at 512 points; larger
    inputs raise rather than being approximated silently.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ConfigurationError(f"w2_exact needs equal shapes, got {a.shape} vs {b.shape}")
    if a.shape[0] > W2_EXACT_CAP:
        raise ConfigurationError(f"w2_exact is capped at {W2_EXACT_CAP} points")
    cost = cdist(a, b, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


def moment_summary(points: Array):
    """Sample mean and covariance (ddof = 1; zero covariance for N = 1)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mean = points.mean(axis=0)
    if points.shape[0] < 2:
        cov = np.zeros((points.shape[1], points.shape[1]))
    else:
        cov = np.cov(points.T, ddof=1).reshape(points.shape[1], points.shape[1])
    return mean, cov


def _synthetic_envelope(target: TargetModel) -> float:
    """Numerically locate the density maximum over the rejection box."""
    x_lo, x_hi, y_lo, y_hi = _SYNTHETIC_BOX
    xs = np.linspace(x_lo, x_hi, 201)
    ys = np.linspace(y_lo, y_hi, 201)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    logp = target.log_density_unnorm(pts)
    best = pts[int(np.argmax(logp))]
    res = minimize(lambda x: -target.log_density_unnorm(x), best, method="Nelder-Mead")
    peak = max(float(np.max(logp)), float(-res.fun))
    return float(np.exp(peak)) * (1.0 + 1e-9)


def reference_sample(target: TargetModel, n: int, seed: int = 0) -> Array:
    """Draw n i.i.d. reference samples from a target.

    Uses the target's exact sampler when present; otherwise rejection sampling
    on the box (-7, 3) x (-9, 9) against a numerically located envelope.
    Aborts if the acceptance rate drops below 1e-4.
    """
    rng = np.random.default_rng(seed)
    if target.exact_sampler is not None:
        return target.exact_sampler(rng, n)
    if target.dim != 2:
        raise ConfigurationError(f"no sampling route for target '{target.name}'")

    x_lo, x_hi, y_lo, y_hi = _SYNTHETIC_BOX
    envelope = _synthetic_envelope(target)
    out = np.empty((n, 2))
    filled = 0
    proposed = 0
    while filled < n:
        batch = max(4 * (n - filled), 1024)
        pts = rng.uniform((x_lo, y_lo), (x_hi, y_hi), size=(batch, 2))
        u = rng.uniform(size=batch)
        accept = u * envelope < np.exp(target.log_density_unnorm(pts))
        proposed += batch
        take = min(int(accept.sum()), n - filled)
        out[filled:filled + take] = pts[accept][:take]
        filled += take
        if proposed >= 10_000 and filled / proposed < 1e-4:
            raise ConfigurationError("rejection acceptance rate below 1e-4")
    return out


def compute_metrics(
    iteration: int,
    points: Array,
    reference: Array,
    kernel: KernelConfig = KernelConfig(),
) -> MetricReport:
    """MMD / W2 / moments of an ensemble against a reference sample.

    W2 matches the ensemble against the leading equal-size slice of the
    reference and is omitted (None) above the exact-solver cap.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    w2 = None
    if n <= W2_EXACT_CAP and reference.shape[0] >= n:
        w2 = w2_exact(points, reference[:n])
    mean, cov = moment_summary(points)
    return MetricReport(
        iteration=iteration,
        mmd=mmd(points, reference, kernel),
        w2=w2,
        mean=mean,
        cov=cov,
    )
