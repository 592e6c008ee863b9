"""Hot numeric kernels, each in a numba-compiled and a pure-numpy flavour.

The ``*_nb`` functions are compiled with numba; the ``*_np`` functions use
vectorised numpy (and LAPACK for the SVD). Public code calls the unsuffixed
dispatchers at the bottom, which pick one flavour according to
``pera._backend.USE_NUMBA``. Both flavours are always importable so the
benchmark and the backend-agreement tests can exercise them side by side.

Pair kernels take two index arrays ``first``/``second`` of length
``r + C(r, 2)`` listing the (i, j) pairs in canonical order (squares first,
then crosses); expanded column/row ``r + p`` belongs to pair ``p``.
"""

import numpy as np

from ._backend import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# matmul


@njit
def matmul_nb(a, b):
    m, inner = a.shape
    p = b.shape[1]
    out = np.zeros((m, p))
    # i-k-j order: each output entry accumulates k = 0, 1, ... in sequence.
    for i in range(m):
        for k in range(inner):
            aik = a[i, k]
            for j in range(p):
                out[i, j] += aik * b[k, j]
    return out


def matmul_np(a, b):
    return a @ b


# ---------------------------------------------------------------------------
# one-sided Jacobi SVD

_JACOBI_TOL = 1e-15
_JACOBI_MAX_SWEEPS = 80
_NULL_COLUMN = 1e-150


@njit
def _jacobi_tall_nb(a):
    # a is m x n with m >= n and max |a_ij| == 1 (caller rescales).
    m, n = a.shape
    ut = np.ascontiguousarray(a.T).copy()  # row j holds column j of the working matrix
    vt = np.eye(n)
    for _sweep in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for k in range(m):
                    up = ut[p, k]
                    uq = ut[q, k]
                    alpha += up * up
                    beta += uq * uq
                    gamma += up * uq
                if alpha == 0.0 or beta == 0.0:
                    continue
                if abs(gamma) <= _JACOBI_TOL * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    sgn = 1.0 if zeta >= 0.0 else -1.0
                    t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for k in range(m):
                    up = ut[p, k]
                    uq = ut[q, k]
                    ut[p, k] = c * up - s * uq
                    ut[q, k] = s * up + c * uq
                for k in range(n):
                    vp = vt[p, k]
                    vq = vt[q, k]
                    vt[p, k] = c * vp - s * vq
                    vt[q, k] = s * vp + c * vq
        if not rotated:
            break

    sv = np.empty(n)
    for j in range(n):
        acc = 0.0
        for k in range(m):
            acc += ut[j, k] * ut[j, k]
        sv[j] = np.sqrt(acc)
    order = np.argsort(-sv, kind="mergesort")

    s_out = np.empty(n)
    u = np.zeros((m, n))
    v = np.zeros((n, n))
    for col in range(n):
        src = order[col]
        s_out[col] = sv[src]
        for k in range(n):
            v[k, col] = vt[src, k]
        if sv[src] > _NULL_COLUMN:
            for k in range(m):
                u[k, col] = ut[src, k] / sv[src]

    # Null columns get an orthonormal completion from the standard basis.
    basis = 0
    for col in range(n):
        if s_out[col] > _NULL_COLUMN:
            continue
        while basis < m:
            cand = np.zeros(m)
            cand[basis] = 1.0
            basis += 1
            for _pass in range(2):
                for other in range(n):
                    if other == col:
                        continue
                    dot = 0.0
                    for k in range(m):
                        dot += u[k, other] * cand[k]
                    for k in range(m):
                        cand[k] -= dot * u[k, other]
            nrm = np.sqrt(np.sum(cand * cand))
            if nrm > 0.5:
                for k in range(m):
                    u[k, col] = cand[k] / nrm
                break
    return s_out, u, v


def svd_nb(a):
    """Thin SVD ``a = u @ diag(s) @ v.T`` via one-sided Jacobi."""
    m, n = a.shape
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0:
        k = min(m, n)
        return np.zeros(k), np.eye(m, k), np.eye(n, k)
    if m >= n:
        s, u, v = _jacobi_tall_nb(np.ascontiguousarray(a / scale))
    else:
        s, v, u = _jacobi_tall_nb(np.ascontiguousarray(a.T / scale))
    return s * scale, u, v


def svd_np(a):
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return s, u, vt.T.copy()


# ---------------------------------------------------------------------------
# polynomial expansion of the factors


@njit
def expand_b_nb(b, first, second):
    m, r = b.shape
    npair = first.shape[0]
    out = np.empty((m, r + npair))
    for row in range(m):
        for i in range(r):
            out[row, i] = b[row, i]
        for p in range(npair):
            out[row, r + p] = b[row, first[p]] * b[row, second[p]]
    return out


def expand_b_np(b, first, second):
    return np.concatenate([b, b[:, first] * b[:, second]], axis=1)


@njit
def expand_a_nb(a, h, first, second):
    r, n = a.shape
    npair = first.shape[0]
    out = np.empty((r + npair, n))
    for i in range(r):
        for col in range(n):
            out[i, col] = a[i, col]
    for p in range(npair):
        i = first[p]
        j = second[p]
        hp = h[p]
        for col in range(n):
            out[r + p, col] = hp * (a[i, col] * a[j, col])
    return out


def expand_a_np(a, h, first, second):
    return np.concatenate([a, h[:, None] * (a[first] * a[second])], axis=0)


# ---------------------------------------------------------------------------
# gradient collapse: expanded-factor gradients -> (d_b, d_a, d_h)


@njit
def collapse_grads_nb(b, a, h, d_bhat, d_ahat, first, second):
    m, r = b.shape
    n = a.shape[1]
    npair = first.shape[0]
    d_b = np.empty((m, r))
    d_a = np.empty((r, n))
    d_h = np.zeros(npair)
    for row in range(m):
        for i in range(r):
            d_b[row, i] = d_bhat[row, i]
    for i in range(r):
        for col in range(n):
            d_a[i, col] = d_ahat[i, col]
    for p in range(npair):
        i = first[p]
        j = second[p]
        k = r + p
        hp = h[p]
        acc = 0.0
        for col in range(n):
            acc += d_ahat[k, col] * (a[i, col] * a[j, col])
        d_h[p] = acc
        for row in range(m):
            g = d_bhat[row, k]
            d_b[row, i] += b[row, j] * g
            d_b[row, j] += b[row, i] * g
        for col in range(n):
            g = hp * d_ahat[k, col]
            d_a[i, col] += a[j, col] * g
            d_a[j, col] += a[i, col] * g
    return d_b, d_a, d_h


def collapse_grads_np(b, a, h, d_bhat, d_ahat, first, second):
    r = b.shape[1]
    g_b = d_bhat[:, r:]
    g_a = d_ahat[r:]
    d_h = np.sum(g_a * (a[first] * a[second]), axis=1)
    # For squares (i == j) both scatters hit column i, giving the factor 2.
    d_bt = d_bhat[:, :r].T.copy()
    np.add.at(d_bt, first, (b[:, second] * g_b).T)
    np.add.at(d_bt, second, (b[:, first] * g_b).T)
    d_a = d_ahat[:r].copy()
    hg = h[:, None] * g_a
    np.add.at(d_a, first, a[second] * hg)
    np.add.at(d_a, second, a[first] * hg)
    return d_bt.T.copy(), d_a, d_h


# ---------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    matmul = matmul_nb
    svd = svd_nb
    expand_b = expand_b_nb
    expand_a = expand_a_nb
    collapse_grads = collapse_grads_nb
else:
    matmul = matmul_np
    svd = svd_np
    expand_b = expand_b_np
    expand_a = expand_a_np
    collapse_grads = collapse_grads_np
