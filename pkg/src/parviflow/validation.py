"""Self-validation suite: drift identities, regularity probes, grid checks.

``run_validation("fast")`` covers the algebraic identities and small grids in
well under a minute; ``"full"`` adds the grid-refinement study and long
sampler moment runs. Every check reports a residual, its threshold, and a
pass flag; the CLI turns any failure into a nonzero exit.
"""

from __future__ import annotations

import math
import time
from typing import Callable, Dict, List

import numpy as np

from . import grid_oracle as go
from .diagnostics import moment_summary
from .recipe import (
    DynamicsSpec,
    drift_fgh,
    drift_v,
    drift_w,
    make_constant_spec,
    make_ld_spec,
    make_sghmc_spec,
    matrix_divergence,
    validate_regularity,
)
from .samplers import SamplerConfig, init_ensemble, run
from .smoothing import KernelConfig, blob_neg_grad_log_q
from .targets import make_gaussian, with_gaussian_momentum

ROTATION_Q = np.array([[0.0, -1.0], [1.0, 0.0]])


def _check(name: str, residual: float, threshold: float, passed=None) -> Dict:
    if passed is None:
        passed = bool(residual <= threshold)
    return {
        "check": name,
        "residual": float(residual),
        "threshold": float(threshold),
        "passed": bool(passed),
    }


def _recipe_identity(spec: DynamicsSpec, target, rng) -> float:
    worst = 0.0
    zero = np.zeros(spec.dim)
    for _ in range(100):
        x = rng.uniform(-3, 3, size=spec.dim)
        v = drift_v(spec, target, x)
        w = drift_w(spec, target, zero, x)
        if spec.constant_matrices:
            div_d = np.zeros(spec.dim)
        else:
            div_d = matrix_divergence(spec.D, x)
        worst = max(worst, float(np.max(np.abs(v - w - div_d))))
    return worst


def _fgh_zero_residual(spec: DynamicsSpec, target, rng) -> float:
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-3, 3, size=spec.dim)
        glp = target.grad_log_density(x)
        worst = max(worst, float(np.max(np.abs(drift_fgh(spec, target, glp, x)))))
    return worst


def _so3_spec() -> DynamicsSpec:
    def q_fn(x):
        return np.array(
            [
                [0.0, x[2], -x[1]],
                [-x[2], 0.0, x[0]],
                [x[1], -x[0], 0.0],
            ]
        )

    return DynamicsSpec(
        dim=3,
        D=lambda x: np.eye(3),
        Q=q_fn,
        d_block="full",
        fiber_dim=3,
        constant_matrices=False,
        name="so3",
    )


def _gaussian_tail_mass(domain, sigma: float) -> float:
    """Mass of N(0, sigma^2 I) outside the rectangular domain."""
    x_lo, x_hi, y_lo, y_hi = domain

    def inside(lo, hi):
        return 0.5 * (math.erf(hi / (sigma * math.sqrt(2))) - math.erf(lo / (sigma * math.sqrt(2))))

    return 1.0 - inside(x_lo, x_hi) * inside(y_lo, y_hi)


def _fast_checks() -> List[Dict]:
    checks: List[Dict] = []
    rng = np.random.default_rng(2024)

    gauss2 = make_gaussian((0.0, 0.0), np.eye(2))
    gauss4 = with_gaussian_momentum(gauss2, np.eye(2))
    ld = make_ld_spec(2)
    sghmc = make_sghmc_spec(2, 0.5 * np.eye(2))
    rotdiff = make_constant_spec(0.5 * np.eye(2), ROTATION_Q, name="rotation+diffusion")

    checks.append(_check("recipe_identity_ld", _recipe_identity(ld, gauss2, rng), 1e-10))
    checks.append(_check("recipe_identity_sghmc", _recipe_identity(sghmc, gauss4, rng), 1e-10))
    checks.append(_check("recipe_identity_rotdiff", _recipe_identity(rotdiff, gauss2, rng), 1e-10))
    checks.append(_check("recipe_identity_so3", _recipe_identity(_so3_spec(), make_gaussian(np.zeros(3), np.eye(3)), rng), 1e-9))

    checks.append(_check("flow_zero_at_target_ld", _fgh_zero_residual(ld, gauss2, rng), 0.0))
    checks.append(_check("flow_zero_at_target_sghmc", _fgh_zero_residual(sghmc, gauss4, rng), 0.0))

    probes = [rng.uniform(-2, 2, size=4) for _ in range(20)]
    report = validate_regularity(sghmc, probes)
    checks.append(
        _check("jacobi_constant_exact", report.jacobi_residual, 0.0, report.jacobi_exact)
    )
    probes3 = [rng.uniform(-2, 2, size=3) for _ in range(20)]
    so3_report = validate_regularity(_so3_spec(), probes3)
    checks.append(_check("jacobi_so3", so3_report.jacobi_residual, 1e-8))

    broken = DynamicsSpec(
        dim=2,
        D=lambda x: np.eye(2),
        Q=lambda x: ROTATION_Q + 0.1 * np.eye(2),
        d_block="full",
        fiber_dim=2,
        constant_matrices=True,
        name="broken",
    )
    broken_report = validate_regularity(broken, [np.zeros(2)])
    checks.append(
        _check("skew_violation_detected", broken_report.skew_residual, 1e-10,
               passed=broken_report.skew_residual > 1e-10)
    )
    indefinite = DynamicsSpec(
        dim=2,
        D=lambda x: np.diag([1.0, -1e-6]),
        Q=lambda x: np.zeros((2, 2)),
        d_block="full",
        fiber_dim=2,
        constant_matrices=True,
        name="indefinite",
    )
    psd_report = validate_regularity(indefinite, [np.zeros(2)])
    checks.append(
        _check("psd_violation_detected", psd_report.min_d_eigenvalue, -1e-10,
               passed=not psd_report.psd_ok)
    )

    pair = np.array([[-0.5, 0.0], [0.5, 0.0]])
    est = blob_neg_grad_log_q(KernelConfig(bandwidth=1.0), pair)
    checks.append(_check("blob_pair_antisymmetry", float(np.max(np.abs(est.sum(axis=0)))), 0.0))

    # threshold calibrated against the analytic-score oracle: correct
    # estimates stay below 0.05 over 10 seeds, a sign flip in the repulsive
    # term lands above 0.11
    pts = np.random.default_rng(7).standard_normal((2000, 2))
    est = blob_neg_grad_log_q(KernelConfig(), pts)
    mse = float(np.mean((est - pts) ** 2))
    checks.append(_check("blob_gaussian_consistency_n2000", mse, 0.10))

    domain = (-4.5, 4.5, -4.5, 4.5)
    checks.append(_check("box_truncation_mass", _gaussian_tail_mass(domain, 1.0), 1e-4))

    q0 = go.discretize_target(gauss2, 32, 32, domain)
    fpe = go.evolve_fokker_planck(q0, ld, gauss2, dt=2e-3, T=0.5, n_saves=6)
    final = fpe[-1][1]
    checks.append(_check("grid_mass_conservation", abs(final.mass.sum() - 1.0), 1e-6))
    checks.append(_check("grid_stationarity_ld_32", final.l1_distance(q0), 2e-2))

    report = go.compare_lemma1(ld, gauss2, q0, dt=2e-3, T=0.25, n_saves=6)
    checks.append(_check("grid_drift_equivalence_ld_32", report.max_gap, 4e-2))
    return checks


def _refinement_gaps(spec, target, offset_mean, dt64: float, T: float) -> List[float]:
    gaps = []
    for n, dt in ((32, dt64 * 2), (64, dt64), (128, dt64 / 2)):
        domain = (-4.5, 4.5, -4.5, 4.5)
        q0 = go.discretize(
            lambda x: np.exp(-0.5 * np.sum((x - offset_mean) ** 2, axis=-1) / 0.8 ** 2),
            n, n, domain,
        )
        gaps.append(go.compare_lemma1(spec, target, q0, dt, T).max_gap)
    return gaps


def _full_checks() -> List[Dict]:
    checks: List[Dict] = []
    gauss2 = make_gaussian((0.0, 0.0), np.eye(2))
    ld = make_ld_spec(2)
    offset = np.array([0.5, -0.3])

    gaps = _refinement_gaps(ld, gauss2, offset, dt64=5e-4, T=0.25)
    r1 = gaps[0] / gaps[1]
    r2 = gaps[1] / gaps[2]
    for label, ratio in (("refinement_ratio_32_64", r1), ("refinement_ratio_64_128", r2)):
        checks.append(_check(label, ratio, 5.0, passed=3.0 <= ratio <= 5.0))

    rotation = make_constant_spec(np.zeros((2, 2)), ROTATION_Q, name="rotation")
    domain = (-4.5, 4.5, -4.5, 4.5)
    q0 = go.discretize(
        lambda x: np.exp(-0.5 * np.sum((x - offset) ** 2, axis=-1) / 0.8 ** 2),
        64, 64, domain,
    )
    kl_report = go.kl_conservation_check(rotation, gauss2, q0, dt=1e-3, T=1.0)
    rel = kl_report.max_abs_delta / kl_report.kl_values[0]
    checks.append(_check("kl_conservation_rotation", rel, 1e-2))

    # long-run moment test, pooled over seeds (single stochastic ensembles of
    # 200 particles carry ~0.07 mean noise per coordinate)
    target = make_gaussian((0.0, 0.0), np.diag([1.0, 1.0]))
    for method in ("blob", "sghmc", "psghmc-det", "psghmc-fgh"):
        finals = []
        for seed in (11, 12, 13):
            cfg = SamplerConfig(method=method, step_size=0.01, n_steps=10_000, seed=seed)
            ens = init_ensemble(
                200, 2, np.zeros(2), 1.0,
                momentum_sigma=None if method == "blob" else np.eye(2), seed=seed,
            )
            run(cfg, target, ens)
            finals.append(ens.theta)
        mean, cov = moment_summary(np.vstack(finals))
        mean_err = float(np.max(np.abs(mean)))
        cov_err = float(np.linalg.norm(cov - np.eye(2)) / np.linalg.norm(np.eye(2)))
        checks.append(_check(f"moments_mean_{method}", mean_err, 0.1))
        checks.append(_check(f"moments_cov_{method}", cov_err, 0.2))
    return checks


def run_validation(level: str = "fast") -> Dict:
    """Run the validation suite; returns the JSON-serializable report."""
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    start = time.perf_counter()
    checks = _fast_checks()
    if level == "full":
        checks.extend(_full_checks())
    return {
        "level": level,
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
        "wall_time": time.perf_counter() - start,
    }
