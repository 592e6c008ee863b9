"""Adaptive-moment optimizer over adapter parameters."""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError

SCHEDULES = ("constant", "linear")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    steps: int = 1000
    batch_size: int = 16
    warmup_steps: int = 0
    schedule: str = "constant"
    algorithm: str = "adamw"

    def __post_init__(self):
        if self.algorithm != "adamw":
            raise ConfigError(f"unsupported optimizer {self.algorithm!r}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.steps < 0 or self.batch_size < 1 or self.warmup_steps < 0:
            raise ConfigError("steps, batch_size and warmup_steps must be non-negative (batch_size >= 1)")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}; expected one of {SCHEDULES}")

    def to_dict(self):
        return asdict(self)

    def lr_at(self, t):
        """Learning rate for 1-based step ``t``."""
        lr = self.learning_rate
        if self.warmup_steps and t <= self.warmup_steps:
            return lr * t / self.warmup_steps
        if self.schedule == "linear":
            span = max(1, self.steps - self.warmup_steps)
            return lr * max(0.0, (self.steps - t + 1) / span)
        return lr


def large_model_preset(steps=1000):
    """The large-model fine-tuning settings: AdamW, lr 1e-4, linear decay, 100 warmup steps, batch 16."""
    return OptimizerConfig(learning_rate=1e-4, steps=steps, batch_size=16, warmup_steps=100, schedule="linear")


class AdamW:
    """AdamW with bias correction.

    Frozen coefficients never get optimizer state; only the trainable slice
    of each ``h`` vector is tracked and updated.
    """

    def __init__(self, adapters, config):
        self.adapters = list(adapters)
        self.config = config
        self.t = 0
        self._h_index = [np.flatnonzero(~ad.coeff.frozen) for ad in self.adapters]
        self._m = []
        self._v = []
        for ad, idx in zip(self.adapters, self._h_index):
            self._m.append([np.zeros_like(ad.b), np.zeros_like(ad.a), np.zeros(idx.size)])
            self._v.append([np.zeros_like(ad.b), np.zeros_like(ad.a), np.zeros(idx.size)])

    def step(self, grads):
        cfg = self.config
        self.t += 1
        lr = cfg.lr_at(self.t)
        b1, b2 = cfg.beta1, cfg.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for ad, g, idx, ms, vs in zip(self.adapters, grads, self._h_index, self._m, self._v):
            h_train = ad.coeff.values[idx]
            params = [ad.b, ad.a, h_train]
            for p, gp, m, v in zip(params, (g.d_b, g.d_a, g.d_h[idx]), ms, vs):
                m *= b1
                m += (1.0 - b1) * gp
                v *= b2
                v += (1.0 - b2) * gp * gp
                if cfg.weight_decay:
                    p -= lr * cfg.weight_decay * p
                p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
            ad.coeff.values[idx] = h_train
        return lr
