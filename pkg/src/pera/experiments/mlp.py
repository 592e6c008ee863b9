"""Two-layer tanh perceptron with an adapter on each frozen layer."""

import numpy as np

from ..adapter import backward, forward, input_grad


def softmax(logits):
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def cross_entropy(logits, labels):
    z = logits - logits.max(axis=0, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=0, keepdims=True))
    return float(-logp[labels, np.arange(labels.size)].mean())


def logits(adapters, w1, w2, x, masks=(None, None)):
    hidden = np.tanh(forward(adapters[0], w1, x, masks[0]))
    return forward(adapters[1], w2, hidden, masks[1])


def loss_and_grads(adapters, w1, w2, x, labels, masks=(None, None)):
    ad1, ad2 = adapters
    hidden = np.tanh(forward(ad1, w1, x, masks[0]))
    out = forward(ad2, w2, hidden, masks[1])
    loss = cross_entropy(out, labels)
    d_out = softmax(out)
    d_out[labels, np.arange(labels.size)] -= 1.0
    d_out /= labels.size
    g2 = backward(ad2, w2, hidden, d_out, masks[1])
    d_hidden = input_grad(ad2, w2, d_out, masks[1])
    d_pre = d_hidden * (1.0 - hidden * hidden)
    g1 = backward(ad1, w1, x, d_pre, masks[0])
    return loss, [g1, g2]


def accuracy(adapters, w1, w2, x, labels):
    return float(np.mean(np.argmax(logits(adapters, w1, w2, x), axis=0) == labels))


def output_fn(adapters, w1, w2):
    """Scalar readout ``logsumexp(logits(x))`` for a single input vector.

    Smooth in the input, so its Hessian exposes how the adapted layers
    couple input coordinates.
    """

    def f(x):
        z = logits(adapters, w1, w2, np.asarray(x, dtype=np.float64).reshape(-1, 1))[:, 0]
        zmax = z.max()
        return float(zmax + np.log(np.exp(z - zmax).sum()))

    return f
