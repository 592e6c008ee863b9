"""Dense matrix helpers, SVD, numeric rank and finite-difference gradients.

Matrices are plain 2-D ``float64`` numpy arrays. Every public function
validates its inputs and returns a fresh array; nothing is modified in place.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, ShapeError

MAX_SVD_DIM = 512


def as_matrix(x, name="matrix"):
    """Coerce ``x`` to a finite, C-contiguous float64 2-D array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def _finite_or_raise(arr, what):
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} produced non-finite entries")
    return arr


def matmul(a, b):
    """Matrix product with a fixed row-major accumulation order."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _finite_or_raise(kernels.matmul(a, b), "matmul")


def hadamard(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"hadamard needs equal shapes, got {a.shape} and {b.shape}")
    return _finite_or_raise(a * b, "hadamard")


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD: ``m == left_vectors @ diag(singular_values) @ right_vectors.T``.

    ``left_vectors`` is rows x k and ``right_vectors`` is cols x k with
    k = min(rows, cols); singular values are sorted non-increasing.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self):
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T

    def truncate(self, k):
        """Rank-``k`` approximation built from the leading ``k`` triplets."""
        k = max(0, min(int(k), self.singular_values.shape[0]))
        return (self.left_vectors[:, :k] * self.singular_values[:k]) @ self.right_vectors[:, :k].T


def svd(m):
    m = as_matrix(m, "m")
    if max(m.shape) > MAX_SVD_DIM:
        raise ShapeError(f"svd is limited to {MAX_SVD_DIM}x{MAX_SVD_DIM}, got {m.shape}")
    s, u, v = kernels.svd(m)
    return SvdResult(singular_values=s, left_vectors=u, right_vectors=v)


def singular_values(m):
    return svd(m).singular_values


def spectral_norm(m):
    s = singular_values(m)
    return float(s[0]) if s.size else 0.0


def numeric_rank(m, rel_tol=1e-10):
    """Number of singular values strictly above ``rel_tol * sigma_1``."""
    if not 0.0 < rel_tol < 1.0:
        raise DomainError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    s = singular_values(m)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def finite_diff_grad(f, x, step=1e-4):
    """Central-difference gradient of a scalar function of a flat vector."""
    if not step > 0:
        raise DomainError(f"step must be positive, got {step}")
    x = np.array(x, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        fp = float(f(x.copy()))
        x[i] = orig - step
        fm = float(f(x.copy()))
        x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise DomainError(f"function evaluation is non-finite at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * step)
    return grad


def rel_frobenius(a, b):
    """``||a - b||_F / max(1, ||b||_F)``."""
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(1.0, np.linalg.norm(b)))
