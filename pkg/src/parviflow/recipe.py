"""Drift fields of measure-preserving diffusion dynamics.

A dynamics is described by a positive semi-definite diffusion matrix D(x) and
a skew-symmetric curl matrix Q(x). The drift that keeps a target density p
stationary under dx = V dt + sqrt(2 D) dB is

    V = (D + Q) grad log p + div D + div Q,

with the row-wise divergence (div A)^i = sum_j d_j A^{ij}. Two deterministic
drifts reproduce the same density curve as the stochastic dynamics:

    W   = D grad log(p/q) + Q grad log p + div Q     (uses the current q)
    F   = (D + Q) grad log(p/q)                      (combined flow form)

F vanishes identically at q = p, which is the stationarity of the target made
explicit at the level of vector fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError
from .targets import TargetModel
from .utils import as_spd_matrix

Array = np.ndarray

_FD_STEP = 1e-5
_PSD_FLOOR = -1e-10
_BLOCK_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class DynamicsSpec:
    """Matrix-valued description (D, Q) of a dynamics.

    Attributes:
        dim: phase-space dimension M.
        D: x -> symmetric PSD (M, M) diffusion matrix.
        Q: x -> skew-symmetric (M, M) curl matrix.
        d_block: structure tag of D, one of "full" (positive definite),
            "zero", or "lower-right" (PD block on the trailing coordinates).
        fiber_dim: size of the trailing PD block (M for "full", 0 for "zero").
        constant_matrices: True when D and Q do not depend on x; divergence
            terms then vanish identically.
        div_D / div_Q: optional analytic row-wise divergences; when absent and
            the matrices are not constant, central finite differences with
            step 1e-5 are used.
    """

    dim: int
    D: Callable[[Array], Array]
    Q: Callable[[Array], Array]
    d_block: str
    fiber_dim: int
    constant_matrices: bool = False
    div_D: Optional[Callable[[Array], Array]] = None
    div_Q: Optional[Callable[[Array], Array]] = None
    name: str = "custom"

    def __post_init__(self):
        if self.d_block not in ("full", "zero", "lower-right"):
            raise ConfigurationError(f"unknown d_block tag '{self.d_block}'")
        if not 0 <= self.fiber_dim <= self.dim:
            raise ConfigurationError("fiber_dim must lie in [0, dim]")


class DynamicsType(Enum):
    """Classification of a dynamics by the rank structure of D.

    TYPE1: D positive definite (dissipative everywhere).
    TYPE2: D = 0 (purely conservative; preserves KL to the target).
    TYPE3: D singular but nonzero (dissipative on the trailing block only).
    """

    TYPE1 = 1
    TYPE2 = 2
    TYPE3 = 3


def dynamics_type(spec: DynamicsSpec) -> DynamicsType:
    """Map the block-structure tag of D onto the three-type classification."""
    return {
        "full": DynamicsType.TYPE1,
        "zero": DynamicsType.TYPE2,
        "lower-right": DynamicsType.TYPE3,
    }[spec.d_block]


def matrix_divergence(mat_fn: Callable[[Array], Array], x: Array, h: float = _FD_STEP) -> Array:
    """Row-wise divergence sum_j d_j A^{ij} by central differences."""
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    out = np.zeros(m)
    for j in range(m):
        step = np.zeros(m)
        step[j] = h
        delta = (mat_fn(x + step) - mat_fn(x - step)) / (2.0 * h)
        out += delta[:, j]
    return out


def _div_d(spec: DynamicsSpec, x: Array) -> Array:
    if spec.constant_matrices:
        return np.zeros(spec.dim)
    if spec.div_D is not None:
        return np.asarray(spec.div_D(x), dtype=float)
    return matrix_divergence(spec.D, x)


def _div_q(spec: DynamicsSpec, x: Array) -> Array:
    if spec.constant_matrices:
        return np.zeros(spec.dim)
    if spec.div_Q is not None:
        return np.asarray(spec.div_Q(x), dtype=float)
    return matrix_divergence(spec.Q, x)


def drift_v(spec: DynamicsSpec, target: TargetModel, x: Array) -> Array:
    """Stationarity-preserving drift (D + Q) grad log p + div D + div Q.

    Accepts a single point (M,) or a batch (n, M).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if spec.constant_matrices:
            a = spec.D(x[0]) + spec.Q(x[0])
            return target.grad_log_density(x) @ a.T
        return np.stack([drift_v(spec, target, row) for row in x])
    glp = target.grad_log_density(x)
    a = spec.D(x) + spec.Q(x)
    return a @ glp + _div_d(spec, x) + _div_q(spec, x)


def drift_w(spec: DynamicsSpec, target: TargetModel, grad_log_q: Array, x: Array) -> Array:
    """Deterministic-equivalent drift D grad log(p/q) + Q grad log p + div Q.

    ``grad_log_q`` is the score of the current density q at ``x``, supplied by
    the caller (a smoothing estimate, a grid read-off, or an analytic score).
    With grad_log_q = grad log p the D-term cancels, leaving Q grad log p +
    div Q. Accepts single points or batches, like :func:`drift_v`.
    """
    x = np.asarray(x, dtype=float)
    glq = np.asarray(grad_log_q, dtype=float)
    if x.ndim == 2:
        if spec.constant_matrices:
            d0, q0 = spec.D(x[0]), spec.Q(x[0])
            glp = target.grad_log_density(x)
            return (glp - glq) @ d0.T + glp @ q0.T
        return np.stack([drift_w(spec, target, glq[k], x[k]) for k in range(x.shape[0])])
    glp = target.grad_log_density(x)
    return spec.D(x) @ (glp - glq) + spec.Q(x) @ glp + _div_q(spec, x)


def drift_fgh(spec: DynamicsSpec, target: TargetModel, grad_log_q: Array, x: Array) -> Array:
    """Combined flow drift (D + Q) grad log(p/q).

    Induces the same density curve as :func:`drift_w` and is identically zero
    at q = p, so the target is a fixed point of the flow by construction.
    """
    x = np.asarray(x, dtype=float)
    glq = np.asarray(grad_log_q, dtype=float)
    if x.ndim == 2:
        if spec.constant_matrices:
            a = spec.D(x[0]) + spec.Q(x[0])
            return (target.grad_log_density(x) - glq) @ a.T
        return np.stack([drift_fgh(spec, target, glq[k], x[k]) for k in range(x.shape[0])])
    a = spec.D(x) + spec.Q(x)
    return a @ (target.grad_log_density(x) - glq)


@dataclass(frozen=True)
class SmoothFunction:
    """Test function with gradient and Hessian, finite-differenced if absent."""

    value: Callable[[Array], float]
    grad: Optional[Callable[[Array], Array]] = None
    hessian: Optional[Callable[[Array], Array]] = None

    def gradient_at(self, x: Array) -> Array:
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        x = np.asarray(x, dtype=float)
        m = x.shape[0]
        out = np.zeros(m)
        for i in range(m):
            step = np.zeros(m)
            step[i] = _FD_STEP
            out[i] = (self.value(x + step) - self.value(x - step)) / (2.0 * _FD_STEP)
        return out

    def hessian_at(self, x: Array) -> Array:
        if self.hessian is not None:
            return np.asarray(self.hessian(x), dtype=float)
        x = np.asarray(x, dtype=float)
        m = x.shape[0]
        h = 1e-4
        out = np.zeros((m, m))
        f0 = self.value(x)
        for i in range(m):
            ei = np.zeros(m)
            ei[i] = h
            out[i, i] = (self.value(x + ei) - 2.0 * f0 + self.value(x - ei)) / h ** 2
            for j in range(i + 1, m):
                ej = np.zeros(m)
                ej[j] = h
                out[i, j] = (
                    self.value(x + ei + ej)
                    - self.value(x + ei - ej)
                    - self.value(x - ei + ej)
                    + self.value(x - ei - ej)
                ) / (4.0 * h ** 2)
                out[j, i] = out[i, j]
        return out


def barbour_apply(spec: DynamicsSpec, target: TargetModel, f: SmoothFunction, x: Array) -> float:
    """Generator of the dynamics applied to a test function at ``x``.

    Computes ((D + Q) grad log p + div D + div Q) . grad f + D : hess f; the
    curl contraction with the Hessian drops out by skew-symmetry.
    """
    x = np.asarray(x, dtype=float)
    v = drift_v(spec, target, x)
    g = f.gradient_at(x)
    hess = f.hessian_at(x)
    return float(v @ g + np.sum(spec.D(x) * hess))


@dataclass(frozen=True)
class RegularityReport:
    """Numerical regularity probe of a (D, Q) pair.

    All residuals are maxima over the probe points. ``jacobi_exact`` marks the
    constant-matrix shortcut where the cyclic identity holds identically.
    """

    skew_residual: float
    min_d_eigenvalue: float
    psd_ok: bool
    pd_ok: bool
    jacobi_residual: float
    jacobi_exact: bool
    block_ok: bool
    block_residual: float
    n_probes: int

    def passes(self, jacobi_tol: float = 1e-8, skew_tol: float = 1e-10) -> bool:
        """Overall verdict at the given tolerances (callers may pick others)."""
        jacobi_ok = self.jacobi_exact or self.jacobi_residual <= jacobi_tol
        return self.skew_residual <= skew_tol and self.psd_ok and self.block_ok and jacobi_ok


def _jacobi_residual(spec: DynamicsSpec, x: Array, h: float = _FD_STEP) -> float:
    """Max over (i,j,k) of the cyclic sum Q^{il} d_l Q^{jk} + cycl."""
    m = spec.dim
    q0 = spec.Q(x)
    dq = np.zeros((m, m, m))
    for ell in range(m):
        step = np.zeros(m)
        step[ell] = h
        dq[ell] = (spec.Q(x + step) - spec.Q(x - step)) / (2.0 * h)
    t1 = np.einsum("il,ljk->ijk", q0, dq)
    t2 = np.einsum("jl,lki->ijk", q0, dq)
    t3 = np.einsum("kl,lij->ijk", q0, dq)
    return float(np.max(np.abs(t1 + t2 + t3)))


def _block_residual(spec: DynamicsSpec, d: Array) -> float:
    """How far D is from its declared block structure (PD checks aside)."""
    m, n = spec.dim, spec.fiber_dim
    if spec.d_block == "zero":
        return float(np.max(np.abs(d)))
    if spec.d_block == "full":
        return 0.0
    base = m - n
    residual = 0.0
    if base > 0:
        residual = max(residual, float(np.max(np.abs(d[:base, :]))))
        residual = max(residual, float(np.max(np.abs(d[:, :base]))))
    return residual


def validate_regularity(spec: DynamicsSpec, probe_points) -> RegularityReport:
    """Probe skew-symmetry of Q, PSD-ness of D, the cyclic (Jacobi) identity
    of Q, and conformity of D to its declared block structure.

    Report-only: nothing raises, callers decide pass/fail.
    """
    probes = [np.asarray(p, dtype=float) for p in probe_points]
    if not probes:
        raise ConfigurationError("probe_points must be nonempty")

    skew = 0.0
    min_eig = np.inf
    block_res = 0.0
    jacobi = 0.0
    for x in probes:
        q = spec.Q(x)
        d = spec.D(x)
        skew = max(skew, float(np.max(np.abs(q + q.T))))
        eigs = np.linalg.eigvalsh(0.5 * (d + d.T))
        min_eig = min(min_eig, float(eigs[0]))
        if spec.d_block == "lower-right" and spec.fiber_dim > 0:
            fiber = d[spec.dim - spec.fiber_dim:, spec.dim - spec.fiber_dim:]
            fiber_min = float(np.linalg.eigvalsh(0.5 * (fiber + fiber.T))[0])
        else:
            fiber_min = float(eigs[0])
        block_res = max(block_res, _block_residual(spec, d))
        if not spec.constant_matrices:
            jacobi = max(jacobi, _jacobi_residual(spec, x))

    psd_ok = min_eig >= _PSD_FLOOR
    if spec.d_block == "full":
        pd_ok = min_eig > 0.0
        block_ok = pd_ok
    elif spec.d_block == "zero":
        pd_ok = True
        block_ok = block_res <= _BLOCK_ZERO_TOL
    else:
        pd_ok = fiber_min > 0.0
        block_ok = block_res <= _BLOCK_ZERO_TOL and pd_ok

    return RegularityReport(
        skew_residual=skew,
        min_d_eigenvalue=min_eig,
        psd_ok=psd_ok,
        pd_ok=pd_ok,
        jacobi_residual=jacobi,
        jacobi_exact=spec.constant_matrices,
        block_ok=block_ok,
        block_residual=block_res,
        n_probes=len(probes),
    )


def _constant(matrix: Array) -> Callable[[Array], Array]:
    frozen = np.asarray(matrix, dtype=float).copy()
    frozen.setflags(write=False)
    return lambda x, _m=frozen: _m


def _canonical_curl(ell: int) -> Array:
    q = np.zeros((2 * ell, 2 * ell))
    q[:ell, ell:] = -np.eye(ell)
    q[ell:, :ell] = np.eye(ell)
    return q


def make_ld_spec(dim: int) -> DynamicsSpec:
    """Overdamped dynamics: D = I, Q = 0 (pure dissipation)."""
    if dim < 1:
        raise ConfigurationError("dim must be >= 1")
    return DynamicsSpec(
        dim=dim,
        D=_constant(np.eye(dim)),
        Q=_constant(np.zeros((dim, dim))),
        d_block="full",
        fiber_dim=dim,
        constant_matrices=True,
        name="ld",
    )


def make_hmc_spec(position_dim: int) -> DynamicsSpec:
    """Conservative dynamics on (theta, r): D = 0, canonical curl matrix."""
    if position_dim < 1:
        raise ConfigurationError("position_dim must be >= 1")
    m = 2 * position_dim
    return DynamicsSpec(
        dim=m,
        D=_constant(np.zeros((m, m))),
        Q=_constant(_canonical_curl(position_dim)),
        d_block="zero",
        fiber_dim=0,
        constant_matrices=True,
        name="hmc",
    )


def make_sghmc_spec(position_dim: int, C) -> DynamicsSpec:
    """Momentum dynamics with friction: canonical curl matrix and a PD block C
    acting on the momentum coordinates only, D = diag(0, C)."""
    if position_dim < 1:
        raise ConfigurationError("position_dim must be >= 1")
    c = as_spd_matrix(C, position_dim, name="C")
    m = 2 * position_dim
    d = np.zeros((m, m))
    d[position_dim:, position_dim:] = c
    return DynamicsSpec(
        dim=m,
        D=_constant(d),
        Q=_constant(_canonical_curl(position_dim)),
        d_block="lower-right",
        fiber_dim=position_dim,
        constant_matrices=True,
        name="sghmc",
    )


def make_constant_spec(D, Q, name: str = "custom") -> DynamicsSpec:
    """Build a spec from explicit constant matrices, inferring the block tag.

    D must be symmetric PSD in one of the supported block forms (PD, zero, or
    a trailing PD block with zeros elsewhere); Q must be skew-symmetric.
    """
    d = np.asarray(D, dtype=float)
    q = np.asarray(Q, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ConfigurationError("D must be a square matrix")
    m = d.shape[0]
    if q.shape != (m, m):
        raise ConfigurationError("Q must match the shape of D")
    if np.max(np.abs(q + q.T)) > 1e-12:
        raise ConfigurationError("Q must be skew-symmetric")
    if np.max(np.abs(d - d.T)) > 1e-12:
        raise ConfigurationError("D must be symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (d + d.T))
    if eigs[0] < _PSD_FLOOR:
        raise ConfigurationError("D must be positive semi-definite")

    if np.max(np.abs(d)) <= _BLOCK_ZERO_TOL:
        d_block, fiber = "zero", 0
    elif eigs[0] > 0.0:
        d_block, fiber = "full", m
    else:
        fiber = None
        for n in range(m - 1, 0, -1):
            base = m - n
            block = d[base:, base:]
            off = max(np.max(np.abs(d[:base, :])), np.max(np.abs(d[:, :base])))
            if off <= _BLOCK_ZERO_TOL and np.linalg.eigvalsh(0.5 * (block + block.T))[0] > 0:
                fiber = n
                break
        if fiber is None:
            raise ConfigurationError(
                "singular D does not have the required trailing PD block form"
            )
        d_block = "lower-right"

    return DynamicsSpec(
        dim=m,
        D=_constant(d),
        Q=_constant(q),
        d_block=d_block,
        fiber_dim=fiber,
        constant_matrices=True,
        name=name,
    )
