"""Runnable checks of the rank, decomposition and approximation guarantees."""

import io
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvariantError
from .expansion import expanded_dim, pair_order
from .numerics import as_matrix, numeric_rank, svd

RANK_TOL = 1e-10


@dataclass(frozen=True)
class RankReport:
    numeric_rank_delta_w: int
    bound_lora: int
    bound_pera: int
    satisfied: bool

    def to_dict(self):
        return dict(self.__dict__)


def rank_report(adapter, rel_tol=RANK_TOL):
    """Numeric rank of the adapter's update against the r and 2r + C(r, 2) ceilings.

    Raises :class:`InvariantError` if the expanded-dimension ceiling is
    exceeded, which can only happen through a bug.
    """
    rank = numeric_rank(adapter.delta_w(), rel_tol)
    bound = expanded_dim(adapter.r)
    report = RankReport(rank, adapter.r, bound, rank <= bound)
    if not report.satisfied:
        raise InvariantError(f"update rank {rank} exceeds expanded dimension {bound}")
    return report


@dataclass(frozen=True)
class TermDecomposition:
    """Unscaled first-order, square and cross parts of the update."""

    first_order: np.ndarray
    square: np.ndarray
    cross: np.ndarray

    @property
    def total(self):
        return self.first_order + self.square + self.cross

    def norms(self):
        return {
            "first_order": float(np.linalg.norm(self.first_order)),
            "square": float(np.linalg.norm(self.square)),
            "cross": float(np.linalg.norm(self.cross)),
        }

    def to_dict(self):
        return {"frobenius_norms": self.norms()}


def term_decomposition(adapter):
    b, a, h = adapter.b, adapter.a, adapter.coeff.values
    order = pair_order(adapter.r)
    first = b @ a
    square = np.zeros_like(first)
    cross = np.zeros_like(first)
    for p in range(order.n_coeffs):
        i, j = order.first[p], order.second[p]
        term = h[p] * np.outer(b[:, i] * b[:, j], a[i] * a[j])
        if i == j:
            square += term
        else:
            cross += term
    return TermDecomposition(first, square, cross)


def eckart_young_gap(w, k, check_tol=1e-10):
    """``sigma_{k+1}(w)`` (zero once ``k`` reaches min(m, n)).

    Also confirms that the rank-``k`` truncated SVD attains exactly that
    spectral error.
    """
    w = as_matrix(w, "w")
    kmax = min(w.shape)
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= kmax:
        raise DomainError(f"k must be an integer in [0, {kmax}], got {k!r}")
    dec = svd(w)
    s = dec.singular_values
    gap = float(s[k]) if k < kmax else 0.0
    resid = w - dec.truncate(k)
    achieved = float(svd(resid).singular_values[0])
    if abs(achieved - gap) > check_tol * max(1.0, float(s[0])):
        raise InvariantError(f"rank-{k} truncation error {achieved!r} differs from sigma_{k + 1} = {gap!r}")
    return gap


def sigma_at(w, k):
    """``sigma_k`` with 1-based ``k``; zero past the last singular value."""
    s = svd(w).singular_values
    return float(s[k - 1]) if k <= s.shape[0] else 0.0


@dataclass(frozen=True)
class ExpressivityBounds:
    lora_floor: float
    pera_floor: float

    def to_dict(self):
        return dict(self.__dict__)


def expressivity_bounds(w_target, r):
    """Best spectral error any rank-r update (LoRA) or rank-(2r + C(r,2)) update can reach."""
    if r < 1:
        raise DomainError(f"r must be positive, got {r}")
    s = svd(w_target).singular_values
    d = expanded_dim(r)
    lora = float(s[r]) if r < s.shape[0] else 0.0
    pera = float(s[d]) if d < s.shape[0] else 0.0
    if pera > lora:
        raise InvariantError("singular values are not sorted")
    return ExpressivityBounds(lora, pera)


@dataclass(frozen=True)
class InteractionMatrix:
    s: np.ndarray
    sample_count: int
    step: float

    def mean_off_diagonal(self):
        d = self.s.shape[0]
        if d < 2:
            return 0.0
        return float((self.s.sum() - np.trace(self.s)) / (d * d - d))

    def to_csv(self):
        d = self.s.shape[0]
        buf = io.StringIO()
        buf.write("index," + ",".join(f"h{j}" for j in range(d)) + "\n")
        for i in range(d):
            buf.write(f"{i}," + ",".join(repr(float(v)) for v in self.s[i]) + "\n")
        return buf.getvalue()

    def to_dict(self):
        return {
            "sample_count": self.sample_count,
            "step": self.step,
            "mean_off_diagonal": self.mean_off_diagonal(),
            "s": self.s.tolist(),
        }


def interaction_strength(f, samples, step=1e-3):
    """Mean absolute mixed second derivative of ``f`` over ``samples``.

    Entry (i, j) estimates ``E |d^2 f / dh_i dh_j|`` with central second
    differences of half-width ``step``.
    """
    if not step > 0:
        raise DomainError(f"step must be positive, got {step}")
    samples = [np.asarray(x, dtype=np.float64).ravel() for x in samples]
    if not samples:
        raise DomainError("interaction_strength needs at least one sample")
    d = samples[0].shape[0]
    acc = np.zeros((d, d))
    denom = 4.0 * step * step

    def ev(x):
        val = float(f(x))
        if not np.isfinite(val):
            raise DomainError("function evaluation is non-finite")
        return val

    for x0 in samples:
        if x0.shape[0] != d:
            raise DomainError("samples differ in dimension")
        f0 = ev(x0)
        for i in range(d):
            x = x0.copy()
            x[i] += 2 * step
            fp = ev(x)
            x[i] = x0[i] - 2 * step
            fm = ev(x)
            acc[i, i] += abs((fp - 2.0 * f0 + fm) / denom)
            for j in range(i + 1, d):
                vals = []
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    x = x0.copy()
                    x[i] += si * step
                    x[j] += sj * step
                    vals.append(ev(x))
                est = abs((vals[0] - vals[1] - vals[2] + vals[3]) / denom)
                acc[i, j] += est
                acc[j, i] += est
    s = acc / len(samples)
    s = 0.5 * (s + s.T)
    return InteractionMatrix(s=s, sample_count=len(samples), step=float(step))
