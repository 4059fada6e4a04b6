"""Small shared helpers: SPD matrix coercion and atomic file writes."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import ConfigurationError


def as_spd_matrix(value, dim: int, name: str = "matrix") -> np.ndarray:
    """Coerce a scalar / diagonal / full matrix into a validated SPD array.

    Scalars become ``value * I``, 1-D arrays become diagonal matrices. The
    result is checked for symmetry and strict positive definiteness (via
    Cholesky) and returned as a read-only (dim, dim) float array.
    """
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.eye(dim) * float(arr)
    elif arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ConfigurationError(f"{name}: diagonal has length {arr.shape[0]}, expected {dim}")
        arr = np.diag(arr)
    if arr.shape != (dim, dim):
        raise ConfigurationError(f"{name}: expected shape ({dim}, {dim}), got {arr.shape}")
    if not np.allclose(arr, arr.T, rtol=1e-12, atol=1e-12):
        raise ConfigurationError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        raise ConfigurationError(f"{name} must be symmetric positive definite") from None
    out = arr.copy()
    out.setflags(write=False)
    return out


def atomic_write_text(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file + rename in the same dir."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
