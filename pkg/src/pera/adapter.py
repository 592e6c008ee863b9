"""Trainable polynomial-expansion adapter for a single linear layer."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ParseError, ShapeError, VersionError
from .expansion import VARIANTS, CoeffVector, compose_delta_w, expand, expanded_dim, n_pairs, variant_mask
from .numerics import as_matrix

SCALING_MODES = ("alpha_over_r", "alpha_over_D", "none")
FORMAT_VERSION = 1
PAIR_ORDER_TAG = "canonical-v1"


@dataclass(frozen=True)
class AdapterConfig:
    r: int = 4
    alpha: float = None
    variant: str = "full"
    scaling_mode: str = "alpha_over_r"
    dropout: float = 0.0
    init_std: float = None
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.r, (int, np.integer)) or isinstance(self.r, bool) or self.r < 1:
            raise ConfigError(f"r must be a positive integer, got {self.r!r}")
        object.__setattr__(self, "r", int(self.r))
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(self.r))
        if self.init_std is None:
            object.__setattr__(self, "init_std", 1.0 / math.sqrt(self.r))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "init_std", float(self.init_std))
        object.__setattr__(self, "dropout", float(self.dropout))
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.scaling_mode not in SCALING_MODES:
            raise ConfigError(f"unknown scaling_mode {self.scaling_mode!r}; expected one of {SCALING_MODES}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not (self.init_std > 0 and math.isfinite(self.init_std)):
            raise ConfigError(f"init_std must be positive, got {self.init_std}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def scale(self):
        if self.scaling_mode == "alpha_over_r":
            return self.alpha / self.r
        if self.scaling_mode == "alpha_over_D":
            return self.alpha / expanded_dim(self.r)
        return 1.0


@dataclass
class PeraAdapter:
    config: AdapterConfig
    b: np.ndarray
    a: np.ndarray
    coeff: CoeffVector

    @property
    def r(self):
        return self.config.r

    @property
    def m(self):
        return self.b.shape[0]

    @property
    def n(self):
        return self.a.shape[1]

    @property
    def scale(self):
        return self.config.scale

    @property
    def h(self):
        return self.coeff.values

    def delta_w(self):
        """Scaled update ``scale * B_hat @ A_hat``."""
        return compose_delta_w(self.b, self.a, self.coeff, self.scale)

    def copy(self):
        return PeraAdapter(
            self.config,
            self.b.copy(),
            self.a.copy(),
            CoeffVector(self.coeff.values.copy(), self.coeff.frozen.copy()),
        )

    def with_variant(self, variant):
        """Same factors under a different variant; newly frozen coefficients are zeroed."""
        cfg = AdapterConfig(**{**self.config.__dict__, "variant": variant})
        mask = variant_mask(variant, self.r)
        h = np.where(mask, 0.0, self.coeff.values)
        return PeraAdapter(cfg, self.b.copy(), self.a.copy(), CoeffVector(h, mask))


@dataclass
class AdapterGrads:
    d_b: np.ndarray
    d_a: np.ndarray
    d_h: np.ndarray = field(default_factory=lambda: np.zeros(0))


def init_adapter(config, m, n):
    """Gaussian ``B``, zero ``A``, zero ``h``; so the initial update is exactly 0."""
    if not isinstance(config, AdapterConfig):
        raise ConfigError("config must be an AdapterConfig")
    if m < 1 or n < 1:
        raise ShapeError(f"layer dimensions must be positive, got m={m}, n={n}")
    rng = np.random.default_rng(config.seed)
    b = rng.normal(0.0, config.init_std, size=(m, config.r))
    a = np.zeros((config.r, n))
    return PeraAdapter(config, b, a, CoeffVector.zeros(config.r, config.variant))


def random_adapter(config, m, n, rng, coeff_scale=1.0):
    """Adapter with Gaussian ``B``, ``A`` and unfrozen ``h``; for tests and analysis."""
    b = rng.standard_normal((m, config.r))
    a = rng.standard_normal((config.r, n))
    coeff = CoeffVector.zeros(config.r, config.variant)
    draw = coeff_scale * rng.standard_normal(coeff.values.shape)
    coeff.values[~coeff.frozen] = draw[~coeff.frozen]
    return PeraAdapter(config, b, a, coeff)


def dropout_mask(rng, shape, p):
    """Inverted-dropout mask (entries 0 or 1/(1-p)); all ones when p == 0."""
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


def _check_layer(adapter, w0, x):
    w0 = as_matrix(w0, "W0")
    x = as_matrix(x, "x")
    if w0.shape != (adapter.m, adapter.n):
        raise ShapeError(f"W0 has shape {w0.shape}, adapter expects {(adapter.m, adapter.n)}")
    if x.shape[0] != adapter.n:
        raise ShapeError(f"x has {x.shape[0]} rows, layer input size is {adapter.n}")
    return w0, x


def _adapter_input(x, mask):
    if mask is None:
        return x
    if mask.shape != x.shape:
        raise ShapeError(f"dropout mask shape {mask.shape} does not match x {x.shape}")
    return x * mask


def forward(adapter, w0, x, mask=None):
    """``W0 x + scale * B_hat (A_hat x)``, evaluated factor-first."""
    w0, x = _check_layer(adapter, w0, x)
    ef = expand(adapter.b, adapter.a, adapter.coeff)
    inner = kernels.matmul(ef.a_hat, _adapter_input(x, mask))
    return kernels.matmul(w0, x) + adapter.scale * kernels.matmul(ef.b_hat, inner)


def _collapse(adapter, ef, d_bhat, d_ahat):
    d_b, d_a, d_h = kernels.collapse_grads(
        adapter.b, adapter.a, adapter.coeff.values, d_bhat, d_ahat, ef.order.first, ef.order.second
    )
    d_h[adapter.coeff.frozen] = 0.0
    return AdapterGrads(d_b, d_a, d_h)


def backward(adapter, w0, x, upstream, mask=None):
    """Gradients w.r.t. ``B``, ``A`` and ``h`` given ``upstream = dL/d output``."""
    w0, x = _check_layer(adapter, w0, x)
    upstream = as_matrix(upstream, "upstream")
    if upstream.shape != (adapter.m, x.shape[1]):
        raise ShapeError(f"upstream has shape {upstream.shape}, expected {(adapter.m, x.shape[1])}")
    xd = _adapter_input(x, mask)
    ef = expand(adapter.b, adapter.a, adapter.coeff)
    s = adapter.scale
    # With G = s * U xd^T:  dB_hat = G A_hat^T = s U (A_hat xd)^T,  dA_hat = B_hat^T G.
    ax = kernels.matmul(ef.a_hat, xd)
    d_bhat = s * kernels.matmul(upstream, np.ascontiguousarray(ax.T))
    bu = kernels.matmul(np.ascontiguousarray(ef.b_hat.T), upstream)
    d_ahat = s * kernels.matmul(bu, np.ascontiguousarray(xd.T))
    return _collapse(adapter, ef, d_bhat, d_ahat)


def backward_from_weight_grad(adapter, grad_w):
    """Gradients given ``dL/dW'`` for the effective weight ``W' = W0 + scale * delta_W``."""
    grad_w = as_matrix(grad_w, "grad_w")
    if grad_w.shape != (adapter.m, adapter.n):
        raise ShapeError(f"grad_w has shape {grad_w.shape}, expected {(adapter.m, adapter.n)}")
    ef = expand(adapter.b, adapter.a, adapter.coeff)
    g = adapter.scale * grad_w
    d_bhat = kernels.matmul(g, np.ascontiguousarray(ef.a_hat.T))
    d_ahat = kernels.matmul(np.ascontiguousarray(ef.b_hat.T), g)
    return _collapse(adapter, ef, d_bhat, d_ahat)


def input_grad(adapter, w0, upstream, mask=None):
    """``dL/dx`` for the adapted layer, needed when layers are stacked."""
    w0 = as_matrix(w0, "W0")
    upstream = as_matrix(upstream, "upstream")
    ef = expand(adapter.b, adapter.a, adapter.coeff)
    base = kernels.matmul(np.ascontiguousarray(w0.T), upstream)
    inner = kernels.matmul(np.ascontiguousarray(ef.b_hat.T), upstream)
    path = adapter.scale * kernels.matmul(np.ascontiguousarray(ef.a_hat.T), inner)
    if mask is not None:
        path = path * mask
    return base + path


def merge(adapter, w0):
    """Fold the update into the frozen weight: ``W0 + scale * delta_W``."""
    w0 = as_matrix(w0, "W0")
    if w0.shape != (adapter.m, adapter.n):
        raise ShapeError(f"W0 has shape {w0.shape}, adapter expects {(adapter.m, adapter.n)}")
    return w0 + adapter.delta_w()


@dataclass(frozen=True)
class ParamCount:
    trainable: int
    total: int


def param_count(config, m, n):
    """Trainable count excludes frozen coefficients; total counts every stored adapter value."""
    r = config.r
    trainable = m * r + r * n + int(np.count_nonzero(~variant_mask(config.variant, r)))
    return ParamCount(trainable=trainable, total=m * r + r * n + n_pairs(r))


# ---------------------------------------------------------------------------
# file format


def to_dict(adapter):
    cfg = adapter.config
    return {
        "format_version": FORMAT_VERSION,
        "m": adapter.m,
        "n": adapter.n,
        "r": cfg.r,
        "variant": cfg.variant,
        "alpha": cfg.alpha,
        "scaling_mode": cfg.scaling_mode,
        "dropout": cfg.dropout,
        "init_std": cfg.init_std,
        "seed": cfg.seed,
        "pair_order": PAIR_ORDER_TAG,
        "b": adapter.b.ravel().tolist(),
        "a": adapter.a.ravel().tolist(),
        "h": adapter.coeff.values.tolist(),
        "frozen": adapter.coeff.frozen.tolist(),
    }


def serialize(adapter):
    return json.dumps(to_dict(adapter), allow_nan=False).encode("utf-8")


def _key_offset(text, key):
    pos = text.find(f'"{key}"')
    return len(text[: max(pos, 0)].encode("utf-8"))


def from_dict(doc, text=""):
    """Validate a decoded adapter document; ``text`` is only used for error offsets."""

    def fail(msg, key=None):
        raise ParseError(msg, _key_offset(text, key) if key else 0)

    if not isinstance(doc, dict):
        fail("adapter document must be an object")
    if "format_version" not in doc:
        fail("missing field 'format_version'")
    if doc["format_version"] != FORMAT_VERSION:
        raise VersionError(
            f"unsupported format_version {doc['format_version']!r}, expected {FORMAT_VERSION}",
            _key_offset(text, "format_version"),
        )
    for key in ("m", "n", "r", "variant", "alpha", "scaling_mode", "pair_order", "b", "a", "h", "frozen"):
        if key not in doc:
            fail(f"missing field {key!r}")
    for key in ("m", "n", "r"):
        if not isinstance(doc[key], int) or isinstance(doc[key], bool) or doc[key] < 1:
            fail(f"field {key!r} must be a positive integer", key)
    if doc["pair_order"] != PAIR_ORDER_TAG:
        fail(f"unsupported pair_order {doc['pair_order']!r}", "pair_order")
    m, n, r = doc["m"], doc["n"], doc["r"]
    try:
        cfg = AdapterConfig(
            r=r,
            alpha=doc["alpha"],
            variant=doc["variant"],
            scaling_mode=doc["scaling_mode"],
            dropout=doc.get("dropout", 0.0),
            init_std=doc.get("init_std"),
            seed=doc.get("seed", 0),
        )
    except (ConfigError, TypeError) as exc:
        fail(f"invalid configuration: {exc}")

    def floats(key, length):
        vals = doc[key]
        if not isinstance(vals, list) or len(vals) != length:
            fail(f"field {key!r} must be an array of length {length}", key)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            fail(f"field {key!r} must contain only numbers", key)
        arr = np.array(vals, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            fail(f"field {key!r} contains non-finite values", key)
        return arr

    b = floats("b", m * r).reshape(m, r)
    a = floats("a", r * n).reshape(r, n)
    h = floats("h", n_pairs(r))
    frozen = doc["frozen"]
    if not isinstance(frozen, list) or len(frozen) != n_pairs(r) or not all(isinstance(v, bool) for v in frozen):
        fail(f"field 'frozen' must be an array of {n_pairs(r)} booleans", "frozen")
    frozen = np.array(frozen, dtype=bool)
    if not np.array_equal(frozen, variant_mask(cfg.variant, r)):
        fail(f"frozen mask does not match variant {cfg.variant!r}", "frozen")
    if np.any(h[frozen] != 0.0):
        fail("frozen coefficients must be exactly zero", "h")
    return PeraAdapter(cfg, b, a, CoeffVector(h, frozen))


def deserialize(payload):
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"payload is not valid UTF-8: {exc.reason}", exc.start) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed adapter document: {exc.msg}", len(text[: exc.pos].encode("utf-8"))) from None
    return from_dict(doc, text)


def save(adapter, path):
    with open(path, "wb") as fh:
        fh.write(serialize(adapter))


def load(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())
