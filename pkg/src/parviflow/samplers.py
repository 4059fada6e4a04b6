"""Time steppers for the four particle systems.

blob         deterministic overdamped flow: theta-step along grad log p plus
             the particle estimate of -grad log q.
sghmc        stochastic momentum dynamics: friction on r plus N(0, 2 C eps)
             kicks; particles do not interact.
psghmc-det   deterministic version of the same dynamics: the friction noise is
             replaced by the particle estimate of grad log q(r).
psghmc-fgh   combined flow form: the r-score also enters the theta update and
             a theta-score term enters the r update.

All updates are simultaneous: every term is evaluated on the pre-step state,
then assigned at once. Per-particle work reads an immutable snapshot of the
ensemble, so within one step it could run concurrently; steps are sequential.
Draws come from the ensemble's single generator in a fixed order, which makes
every run reproducible from its seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, StepRejected
from .smoothing import KernelConfig, blob_neg_grad_log_q
from .targets import NoisyGradient, TargetModel
from .utils import as_spd_matrix

Array = np.ndarray

METHODS = ("blob", "sghmc", "psghmc-det", "psghmc-fgh")


@dataclass
class ParticleEnsemble:
    """N particles, optionally carrying a momentum block of the same shape."""

    theta: Array
    r: Optional[Array]
    iteration: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @property
    def n_particles(self) -> int:
        return self.theta.shape[0]

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(
            theta=self.theta.copy(),
            r=None if self.r is None else self.r.copy(),
            iteration=self.iteration,
            rng=self.rng,
        )


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs of a particle run. ``validate`` is called by :func:`run` and the
    CLI; the raw step functions accept any values (tests exercise eps = 0)."""

    method: str
    step_size: float
    n_steps: int
    sigma_inv: object = 1.0
    C: object = 0.5
    kernel_theta: KernelConfig = KernelConfig(subset="theta")
    kernel_r: KernelConfig = KernelConfig(subset="r")
    seed: int = 0
    sg_noise_std: float = 0.0

    def validate(self, position_dim: int) -> None:
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method '{self.method}'; expected one of {METHODS}")
        if not self.step_size > 0:
            raise ConfigurationError("step_size must be > 0")
        if self.n_steps < 0:
            raise ConfigurationError("n_steps must be >= 0")
        if self.sg_noise_std < 0:
            raise ConfigurationError("sg_noise_std must be >= 0")
        if self.method != "blob":
            as_spd_matrix(self.sigma_inv, position_dim, name="sigma_inv")
            as_spd_matrix(self.C, position_dim, name="C")

    @property
    def needs_momentum(self) -> bool:
        return self.method != "blob"


def init_ensemble(
    n_particles: int,
    dim: int,
    init_mean,
    init_std: float,
    momentum_sigma=None,
    seed: int = 0,
) -> ParticleEnsemble:
    """Draw theta ~ N(init_mean, init_std^2 I) and, when ``momentum_sigma`` is
    given, r ~ N(0, momentum_sigma)."""
    if n_particles < 1:
        raise ConfigurationError("n_particles must be >= 1")
    rng = np.random.default_rng(seed)
    mean = np.broadcast_to(np.atleast_1d(np.asarray(init_mean, dtype=float)), (dim,))
    theta = mean + init_std * rng.standard_normal((n_particles, dim))
    r = None
    if momentum_sigma is not None:
        sigma = as_spd_matrix(momentum_sigma, dim, name="momentum_sigma")
        chol = np.linalg.cholesky(sigma)
        r = rng.standard_normal((n_particles, dim)) @ chol.T
    return ParticleEnsemble(theta=theta, r=r, iteration=0, rng=rng)


def _check_finite(iteration: int, **arrays: Array) -> None:
    for label, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            bad = int(np.argwhere(~np.isfinite(arr))[0][0])
            raise StepRejected(iteration, f"non-finite {label} update (first bad particle {bad})")


def _as_psd(value, ell: int, name: str) -> Array:
    """PSD coercion for the raw steppers; the validated config path requires
    strict SPD, but C = 0 (frictionless limit) is legal at the step level."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.eye(ell) * float(arr)
    elif arr.ndim == 1:
        arr = np.diag(arr)
    if arr.shape != (ell, ell) or not np.allclose(arr, arr.T, atol=1e-12):
        raise ConfigurationError(f"{name}: expected a symmetric ({ell}, {ell}) matrix")
    if np.linalg.eigvalsh(0.5 * (arr + arr.T))[0] < -1e-10:
        raise ConfigurationError(f"{name} must be positive semi-definite")
    return arr


def _psd_factor(mat: Array) -> Array:
    """L with L L^T = mat for symmetric PSD input (eigh-based, zero-safe)."""
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _matrices(cfg: SamplerConfig, ell: int) -> Tuple[Array, Array]:
    si = _as_psd(cfg.sigma_inv, ell, name="sigma_inv")
    c = _as_psd(cfg.C, ell, name="C")
    return si, c


def _require_momentum(ens: ParticleEnsemble) -> None:
    if ens.r is None:
        raise ConfigurationError("this sampler needs a momentum block; init with momentum_sigma")


def step_blob(ens: ParticleEnsemble, target: TargetModel, cfg: SamplerConfig) -> ParticleEnsemble:
    """One deterministic overdamped step on a position-only ensemble."""
    if ens.r is not None:
        raise ConfigurationError("blob operates on a position-only ensemble")
    grad = target.grad_log_density(ens.theta)
    repulsion = blob_neg_grad_log_q(cfg.kernel_theta, ens.theta)
    new_theta = ens.theta + cfg.step_size * (grad + repulsion)
    _check_finite(ens.iteration, theta=new_theta)
    ens.theta = new_theta
    ens.iteration += 1
    return ens


def step_sghmc(ens: ParticleEnsemble, target: TargetModel, cfg: SamplerConfig) -> ParticleEnsemble:
    """One stochastic momentum step; the generator advances even at eps = 0."""
    _require_momentum(ens)
    ell = ens.theta.shape[1]
    si, c = _matrices(cfg, ell)
    eps = cfg.step_size
    grad = target.grad_log_density(ens.theta)
    friction = ens.r @ (c @ si).T
    noise = np.sqrt(2.0 * eps) * ens.rng.standard_normal(ens.r.shape) @ _psd_factor(c).T
    new_theta = ens.theta + eps * ens.r @ si.T
    new_r = ens.r + eps * (grad - friction) + noise
    _check_finite(ens.iteration, theta=new_theta, r=new_r)
    ens.theta, ens.r = new_theta, new_r
    ens.iteration += 1
    return ens


def step_psghmc_det(
    ens: ParticleEnsemble,
    target: TargetModel,
    cfg: SamplerConfig,
    score_r: Optional[Callable[[Array], Array]] = None,
) -> ParticleEnsemble:
    """One deterministic momentum step.

    The friction term sees grad log q(r), estimated from the particles unless
    ``score_r`` supplies it analytically (used by validation).
    """
    _require_momentum(ens)
    ell = ens.theta.shape[1]
    si, c = _matrices(cfg, ell)
    eps = cfg.step_size
    grad = target.grad_log_density(ens.theta)
    if score_r is None:
        grad_log_q_r = -blob_neg_grad_log_q(cfg.kernel_r, ens.r)
    else:
        grad_log_q_r = np.asarray(score_r(ens.r), dtype=float)
    new_theta = ens.theta + eps * (ens.r @ si.T)
    new_r = ens.r + eps * (grad - (ens.r @ si.T + grad_log_q_r) @ c.T)
    _check_finite(ens.iteration, theta=new_theta, r=new_r)
    ens.theta, ens.r = new_theta, new_r
    ens.iteration += 1
    return ens


def step_psghmc_fgh(
    ens: ParticleEnsemble,
    target: TargetModel,
    cfg: SamplerConfig,
    score_theta: Optional[Callable[[Array], Array]] = None,
    score_r: Optional[Callable[[Array], Array]] = None,
) -> ParticleEnsemble:
    """One deterministic combined-flow step.

    On top of the psghmc-det update, the r-score enters the theta update and a
    theta-score term is subtracted from the r update. With both scores set to
    the analytic score of p, the update is the zero map.
    """
    _require_momentum(ens)
    ell = ens.theta.shape[1]
    si, c = _matrices(cfg, ell)
    eps = cfg.step_size
    grad = target.grad_log_density(ens.theta)
    if score_r is None:
        grad_log_q_r = -blob_neg_grad_log_q(cfg.kernel_r, ens.r)
    else:
        grad_log_q_r = np.asarray(score_r(ens.r), dtype=float)
    if score_theta is None:
        grad_log_q_theta = -blob_neg_grad_log_q(cfg.kernel_theta, ens.theta)
    else:
        grad_log_q_theta = np.asarray(score_theta(ens.theta), dtype=float)
    new_theta = ens.theta + eps * (ens.r @ si.T + grad_log_q_r)
    new_r = ens.r + eps * (
        grad - grad_log_q_theta - (ens.r @ si.T + grad_log_q_r) @ c.T
    )
    _check_finite(ens.iteration, theta=new_theta, r=new_r)
    ens.theta, ens.r = new_theta, new_r
    ens.iteration += 1
    return ens


_STEPPERS = {
    "blob": step_blob,
    "sghmc": step_sghmc,
    "psghmc-det": step_psghmc_det,
    "psghmc-fgh": step_psghmc_fgh,
}


@dataclass
class RunTrace:
    """Output of :func:`run`: snapshots, hook records and wall time."""

    snapshots: List[Tuple[int, Array, Optional[Array]]]
    hook_records: List[object]
    wall_time: float


def run(
    cfg: SamplerConfig,
    target: TargetModel,
    ens: ParticleEnsemble,
    hook: Optional[Callable[[int, ParticleEnsemble], object]] = None,
    hook_every: int = 0,
    snapshot_every: int = 0,
) -> RunTrace:
    """Advance the configured stepper for ``cfg.n_steps`` iterations.

    Snapshots (copies of theta and r) are recorded at iteration 0 and at every
    multiple of ``snapshot_every``. The hook fires on its own cadence and
    always on the final iteration; whatever it returns is collected. A
    non-finite update raises :class:`StepRejected` with the iteration index.
    """
    cfg.validate(ens.theta.shape[1])
    if cfg.needs_momentum:
        _require_momentum(ens)
    elif ens.r is not None:
        raise ConfigurationError("blob runs need a position-only ensemble")

    if cfg.sg_noise_std > 0 and not isinstance(target, NoisyGradient):
        noise_seed = int(ens.rng.integers(2 ** 63))
        target = NoisyGradient(
            base=target, noise_std=cfg.sg_noise_std, rng=np.random.default_rng(noise_seed)
        )

    stepper = _STEPPERS[cfg.method]
    snapshots: List[Tuple[int, Array, Optional[Array]]] = []
    records: List[object] = []

    def maybe_record(iteration: int) -> None:
        if snapshot_every > 0:
            take = iteration % snapshot_every == 0
        else:
            take = iteration == 0
        if take:
            snapshots.append(
                (iteration, ens.theta.copy(), None if ens.r is None else ens.r.copy())
            )
        if hook is not None:
            due = hook_every > 0 and iteration % hook_every == 0
            if due or iteration == cfg.n_steps:
                records.append(hook(iteration, ens))

    start = time.perf_counter()
    maybe_record(0)
    try:
        for _ in range(cfg.n_steps):
            stepper(ens, target, cfg)
            maybe_record(ens.iteration)
    except StepRejected as exc:
        exc.partial_trace = RunTrace(
            snapshots=snapshots,
            hook_records=records,
            wall_time=time.perf_counter() - start,
        )
        raise
    return RunTrace(
        snapshots=snapshots,
        hook_records=records,
        wall_time=time.perf_counter() - start,
    )
