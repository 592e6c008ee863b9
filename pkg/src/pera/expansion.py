"""Second-order polynomial expansion of low-rank factors.

Given ``B`` (m x r) and ``A`` (r x n), the expanded factors are

* ``B_hat`` (m x D): columns ``b_i``, then squares ``b_i * b_i``, then
  crosses ``b_i * b_j`` for ``i < j`` in lexicographic order;
* ``A_hat`` (D x n): rows ``a_i``, then ``h_ij * (a_i * a_j)`` in the same
  pair order,

with ``D = 2r + C(r, 2)``. The update is ``delta_W = B_hat @ A_hat``.
Indices are 0-based throughout.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, ShapeError
from .numerics import as_matrix

VARIANTS = ("lora", "square_only", "cross_only", "full")


def n_pairs(r):
    """Number of coefficients, ``r + C(r, 2)``."""
    return r + r * (r - 1) // 2


def expanded_dim(r):
    return 2 * r + r * (r - 1) // 2


@dataclass(frozen=True)
class PairOrder:
    """Canonical descriptor list for rank ``r``.

    ``entries[k]`` is ``(i,)`` for an original column, ``(i, i)`` for a
    square and ``(i, j)`` with ``i < j`` for a cross term.
    """

    r: int
    entries: tuple
    first: np.ndarray = field(repr=False, compare=False)
    second: np.ndarray = field(repr=False, compare=False)

    @property
    def dim(self):
        return len(self.entries)

    @property
    def n_coeffs(self):
        return self.first.shape[0]

    def index(self, descriptor):
        return _index_table(self.r)[tuple(descriptor)]

    def descriptor(self, k):
        return self.entries[k]

    def coeff_index(self, i, j):
        """Position of ``h_ij`` (``i <= j``) in the coefficient vector."""
        if i > j:
            i, j = j, i
        return self.index((i, j)) - self.r

    def is_square(self):
        """Boolean mask over coefficients: True for squares, False for crosses."""
        return self.first == self.second


@lru_cache(maxsize=None)
def _build_order(r):
    singles = [(i,) for i in range(r)]
    squares = [(i, i) for i in range(r)]
    crosses = [(i, j) for i in range(r) for j in range(i + 1, r)]
    pairs = squares + crosses
    first = np.array([p[0] for p in pairs], dtype=np.int64)
    second = np.array([p[1] for p in pairs], dtype=np.int64)
    first.setflags(write=False)
    second.setflags(write=False)
    return PairOrder(r=r, entries=tuple(singles + pairs), first=first, second=second)


@lru_cache(maxsize=None)
def _index_table(r):
    return {d: k for k, d in enumerate(_build_order(r).entries)}


def pair_order(r):
    if not isinstance(r, (int, np.integer)) or r < 1:
        raise DomainError(f"rank must be a positive integer, got {r!r}")
    return _build_order(int(r))


@dataclass
class CoeffVector:
    """Coefficients ``h`` (one per pair ``i <= j``) and their freeze mask."""

    values: np.ndarray
    frozen: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64).ravel()
        self.frozen = np.array(self.frozen, dtype=bool).ravel()
        if self.values.shape != self.frozen.shape:
            raise ShapeError("coefficient values and frozen mask differ in length")

    @classmethod
    def zeros(cls, r, variant="full"):
        return cls(np.zeros(n_pairs(r)), variant_mask(variant, r))

    @property
    def trainable(self):
        return int(np.count_nonzero(~self.frozen))


def variant_mask(variant, r):
    """Freeze mask for a variant: True marks a coefficient pinned at zero."""
    order = pair_order(r)
    square = order.is_square()
    if variant == "lora":
        return np.ones(order.n_coeffs, dtype=bool)
    if variant == "square_only":
        return ~square
    if variant == "cross_only":
        return square.copy()
    if variant == "full":
        return np.zeros(order.n_coeffs, dtype=bool)
    raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def _coeff_values(coeff, r):
    h = coeff.values if isinstance(coeff, CoeffVector) else np.asarray(coeff, dtype=np.float64).ravel()
    if h.shape[0] != n_pairs(r):
        raise ShapeError(f"rank {r} needs {n_pairs(r)} coefficients, got {h.shape[0]}")
    if not np.all(np.isfinite(h)):
        raise DomainError("coefficients contain non-finite entries")
    return np.ascontiguousarray(h)


@dataclass(frozen=True)
class ExpandedFactors:
    b_hat: np.ndarray
    a_hat: np.ndarray
    order: PairOrder


def expand_b(b):
    b = as_matrix(b, "B")
    order = pair_order(b.shape[1])
    return kernels.expand_b(b, order.first, order.second)


def expand_a(a, coeff):
    a = as_matrix(a, "A")
    order = pair_order(a.shape[0])
    h = _coeff_values(coeff, order.r)
    return kernels.expand_a(a, h, order.first, order.second)


def expand(b, a, coeff):
    b = as_matrix(b, "B")
    a = as_matrix(a, "A")
    if b.shape[1] != a.shape[0]:
        raise ShapeError(f"B has rank {b.shape[1]} but A has rank {a.shape[0]}")
    return ExpandedFactors(expand_b(b), expand_a(a, coeff), pair_order(b.shape[1]))


def compose_delta_w(b, a, coeff, scale=1.0):
    """``scale * B_hat @ A_hat`` as an m x n matrix."""
    ef = expand(b, a, coeff)
    dw = kernels.matmul(ef.b_hat, ef.a_hat)
    if scale != 1.0:
        dw = scale * dw
    return dw


def delta_w_sum_oracle(b, a, coeff):
    """Unscaled update summed term by term, without forming expanded factors.

    ``sum_i b_i a_i^T + sum_{i<=j} h_ij (b_i * b_j)(a_i * a_j)^T``; kept
    deliberately naive as an independent check on :func:`compose_delta_w`.
    """
    b = as_matrix(b, "B")
    a = as_matrix(a, "A")
    if b.shape[1] != a.shape[0]:
        raise ShapeError(f"B has rank {b.shape[1]} but A has rank {a.shape[0]}")
    r = b.shape[1]
    h = _coeff_values(coeff, r)
    out = np.zeros((b.shape[0], a.shape[1]))
    for i in range(r):
        out += np.outer(b[:, i], a[i])
    p = 0
    for i in range(r):
        out += h[p] * np.outer(b[:, i] * b[:, i], a[i] * a[i])
        p += 1
    for i in range(r):
        for j in range(i + 1, r):
            out += h[p] * np.outer(b[:, i] * b[:, j], a[i] * a[j])
            p += 1
    return out
