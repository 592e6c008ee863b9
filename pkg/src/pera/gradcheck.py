"""Compare analytic adapter gradients with central finite differences."""

import numpy as np

from .adapter import backward, forward
from .numerics import finite_diff_grad


def flat_params(adapter):
    """Trainable parameters as one vector: ``B``, ``A``, then unfrozen ``h``."""
    free = ~adapter.coeff.frozen
    return np.concatenate([adapter.b.ravel(), adapter.a.ravel(), adapter.coeff.values[free]])


def with_flat_params(adapter, vec):
    out = adapter.copy()
    nb, na = out.b.size, out.a.size
    out.b = vec[:nb].reshape(out.b.shape).copy()
    out.a = vec[nb : nb + na].reshape(out.a.shape).copy()
    out.coeff.values[~out.coeff.frozen] = vec[nb + na :]
    return out


def flat_grads(adapter, grads):
    return np.concatenate([grads.d_b.ravel(), grads.d_a.ravel(), grads.d_h[~adapter.coeff.frozen]])


def max_rel_error(adapter, w0, x, upstream, step=1e-4):
    """Max over trainable entries of ``|g - g_fd| / max(1, |g_fd|)`` for ``L = <upstream, forward>``."""

    def loss(vec):
        return float(np.sum(upstream * forward(with_flat_params(adapter, vec), w0, x)))

    numeric = finite_diff_grad(loss, flat_params(adapter), step)
    analytic = flat_grads(adapter, backward(adapter, w0, x, upstream))
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
