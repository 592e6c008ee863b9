"""Plain LoRA layer written directly against numpy, used as an independent reference."""

import numpy as np


def lora_forward(w0, b, a, x, scale):
    return w0 @ x + scale * (b @ (a @ x))


def lora_backward(b, a, x, upstream, scale):
    """``(dL/dB, dL/dA)`` for ``y = W0 x + scale * B A x``."""
    d_b = scale * upstream @ (a @ x).T
    d_a = scale * (b.T @ upstream) @ x.T
    return d_b, d_a
