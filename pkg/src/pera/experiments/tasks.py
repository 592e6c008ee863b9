"""Seeded desk-scale tasks.

``matrix_approx``
    Fit a rank-``target_rank`` matrix ``E = sum_k u_k v_k^T`` (Gaussian
    ``u``, ``v``) with a single adapter on a zero base weight.
``poly_regression``
    Row inputs ``u_i`` and column inputs ``v_j`` drawn uniformly from
    [-1, 1]; entry (i, j) of the target is a fixed cubic
    ``c0 + c1 x + c2 x^2 + c3 x^3`` of ``x = u_i v_j`` plus N(0, 0.01^2)
    noise. The frozen base weight carries the intercept ``c0``, so a rank-1
    plain adapter realises exactly the first-order model ``c0 + c1 x``
    while its square term adds ``(u*u)(v*v)^T``, i.e. the ``x^2`` part.
``toy_mlp_classification``
    Gaussian blobs classified by a two-layer tanh perceptron whose base
    weights are frozen Gaussians; an adapter sits on each layer.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

KINDS = ("poly_regression", "matrix_approx", "toy_mlp_classification")

DEFAULTS = {
    "poly_regression": {"m": 16, "n": 16, "noise": 0.01},
    "matrix_approx": {"m": 32, "n": 32, "target_rank": 12},
    "toy_mlp_classification": {
        "d_in": 8,
        "hidden": 16,
        "classes": 3,
        "n_train": 256,
        "n_test": 128,
        "spread": 1.5,
    },
}

# Separate generator streams so task data never aliases adapter init (which uses the bare seed).
_TASK_STREAM = 0x7A5C
_HOLDOUT_STREAM = 0x5EED


def task_rng(seed, stream=_TASK_STREAM):
    return np.random.default_rng([int(seed), stream])


@dataclass
class Task:
    kind: str
    params: dict
    seed: int
    data: dict = field(repr=False)
    loss: str = "mse"

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed, "loss": self.loss}


def _merged_params(kind, params):
    merged = dict(DEFAULTS[kind])
    for key, val in (params or {}).items():
        if key not in merged:
            raise ConfigError(f"unknown parameter {key!r} for task {kind!r}")
        merged[key] = val
    return merged


def _positive_int(params, *keys, allow_zero=()):
    for key in keys:
        val = params[key]
        lo = 0 if key in allow_zero else 1
        if not isinstance(val, (int, np.integer)) or isinstance(val, bool) or val < lo:
            raise ConfigError(f"task parameter {key!r} must be an integer >= {lo}, got {val!r}")


def make_task(kind, params=None, seed=1):
    if kind not in KINDS:
        raise ConfigError(f"unknown task kind {kind!r}; expected one of {KINDS}")
    p = _merged_params(kind, params)
    rng = task_rng(seed)
    if kind == "matrix_approx":
        _positive_int(p, "m", "n", "target_rank", allow_zero=("target_rank",))
        rho = p["target_rank"]
        if rho > min(p["m"], p["n"]):
            raise ConfigError(f"target_rank {rho} exceeds min(m, n) = {min(p['m'], p['n'])}")
        u = rng.standard_normal((p["m"], rho))
        v = rng.standard_normal((p["n"], rho))
        target = u @ v.T if rho else np.zeros((p["m"], p["n"]))
        data = {"target": target, "w0": np.zeros((p["m"], p["n"]))}
        return Task(kind, p, seed, data, loss="mse")

    if kind == "poly_regression":
        _positive_int(p, "m", "n")
        if p["noise"] < 0:
            raise ConfigError("noise must be non-negative")
        coeffs = rng.uniform(0.5, 1.5, size=4) * rng.choice([-1.0, 1.0], size=4)
        u = rng.uniform(-1.0, 1.0, size=p["m"])
        v = rng.uniform(-1.0, 1.0, size=p["n"])
        x = np.outer(u, v)
        clean = coeffs[0] + coeffs[1] * x + coeffs[2] * x**2 + coeffs[3] * x**3
        target = clean + p["noise"] * rng.standard_normal(x.shape)
        data = {"target": target, "w0": np.full_like(x, coeffs[0]), "coeffs": coeffs, "u": u, "v": v, "x": x}
        return Task(kind, p, seed, data, loss="mse")

    _positive_int(p, "d_in", "hidden", "classes", "n_train", "n_test")
    if p["classes"] < 2:
        raise ConfigError("classification needs at least two classes")
    d_in, hidden, k = p["d_in"], p["hidden"], p["classes"]
    means = p["spread"] * rng.standard_normal((k, d_in))
    w1 = rng.standard_normal((hidden, d_in)) / np.sqrt(d_in)
    w2 = rng.standard_normal((k, hidden)) / np.sqrt(hidden)

    def blobs(gen, count):
        labels = gen.integers(0, k, size=count)
        x = means[labels] + gen.standard_normal((count, d_in))
        return np.ascontiguousarray(x.T), labels

    x_train, y_train = blobs(rng, p["n_train"])
    x_test, y_test = blobs(task_rng(seed, _HOLDOUT_STREAM), p["n_test"])
    data = {
        "w1": w1,
        "w2": w2,
        "x_train": x_train,
        "y_train": y_train,
        "x_test": x_test,
        "y_test": y_test,
    }
    return Task(kind, p, seed, data, loss="cross_entropy")
