"""Training loop and run records."""

import io
import time
from dataclasses import dataclass, field

import numpy as np

from ..adapter import AdapterConfig, backward_from_weight_grad, dropout_mask, init_adapter, param_count
from ..analysis import rank_report
from ..errors import ConfigError, DivergenceError, InvariantError, ShapeError
from ..numerics import singular_values
from . import mlp
from .optim import AdamW
from .tasks import task_rng

FLOOR_SLACK = 1e-8
MASK_CHECK_EVERY = 100
_BATCH_STREAM = 0xBA7C
_DROPOUT_STREAM = 0xD809


@dataclass
class RunRecord:
    config: dict
    losses: list
    final: dict
    wall_time: float
    seed: int
    adapters: list = field(default_factory=list, repr=False)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("step,loss\n")
        for step, loss in enumerate(self.losses):
            buf.write(f"{step},{loss!r}\n")
        return buf.getvalue()

    def summary(self):
        return {
            "seed": self.seed,
            "steps": len(self.losses),
            "final": self.final,
            "wall_time_s": self.wall_time,
            "config": self.config,
        }


def build_adapters(task, config):
    """Adapters sized for ``task``; layer k of the MLP is seeded with ``config.seed + k``."""
    if task.kind == "toy_mlp_classification":
        p = task.params
        cfg2 = AdapterConfig(**{**config.__dict__, "seed": config.seed + 1})
        return [init_adapter(config, p["hidden"], p["d_in"]), init_adapter(cfg2, p["classes"], p["hidden"])]
    m, n = task.data["target"].shape
    return [init_adapter(config, m, n)]


def _check_frozen(adapters, step):
    for k, ad in enumerate(adapters):
        if np.any(ad.coeff.values[ad.coeff.frozen] != 0.0):
            raise InvariantError(f"frozen coefficient of adapter {k} moved by step {step}")


def _finite_params(adapters):
    return all(np.all(np.isfinite(ad.b)) and np.all(np.isfinite(ad.a)) and np.all(np.isfinite(ad.h)) for ad in adapters)


def _update(optimizer, grads, adapters, step):
    # Overflow inside the update is reported as divergence at the next step, never clamped.
    with np.errstate(over="ignore", invalid="ignore"):
        optimizer.step(grads)
    if not _finite_params(adapters):
        raise DivergenceError(step + 1, float("nan"))


def effective_rank_bound(adapter):
    """Rank ceiling given the active expanded columns: r plus the unfrozen coefficients."""
    return adapter.r + int(np.count_nonzero(~adapter.coeff.frozen))


def _mse_state(adapter, task):
    resid = task.data["w0"] + adapter.delta_w() - task.data["target"]
    return float(np.mean(resid * resid)), resid


def _mse_final(adapter, task):
    loss, resid = _mse_state(adapter, task)
    goal = task.data["target"] - task.data["w0"]
    s_goal = singular_values(goal)
    spectral = float(singular_values(resid)[0])
    k = effective_rank_bound(adapter)
    floor = float(s_goal[k]) if k < s_goal.shape[0] else 0.0
    if spectral < floor - FLOOR_SLACK:
        raise InvariantError(f"spectral error {spectral!r} beats the rank-{k} Eckart-Young floor {floor!r}")
    goal_norm = float(np.linalg.norm(goal))
    frob = float(np.linalg.norm(resid))
    return {
        "final_loss": loss,
        "frobenius_error": frob,
        "relative_error": frob / goal_norm if goal_norm > 0 else frob,
        "spectral_error": spectral,
        "eckart_young_floor": floor,
        "rank_bound": k,
    }


def train(adapters, task, opt):
    """Optimise ``adapters`` on ``task``; mutates the adapters in place.

    Every logged loss is evaluated before the update of that step, so
    ``losses[0]`` is the loss at initialisation.
    """
    if not isinstance(adapters, (list, tuple)):
        adapters = [adapters]
    adapters = list(adapters)
    seed = adapters[0].config.seed
    is_mlp = task.kind == "toy_mlp_classification"
    if is_mlp and len(adapters) != 2:
        raise ShapeError("the toy MLP needs exactly two adapters")
    if not is_mlp and len(adapters) != 1:
        raise ShapeError(f"task {task.kind!r} takes a single adapter")
    if not is_mlp and adapters[0].config.dropout:
        raise ConfigError("dropout applies to input-driven layers; matrix tasks have no adapter input")

    optimizer = AdamW(adapters, opt)
    losses = []
    started = time.perf_counter()

    if is_mlp:
        d = task.data
        count = d["x_train"].shape[1]
        batch = min(opt.batch_size, count)
        order_rng = task_rng(seed, _BATCH_STREAM)
        drop_rng = task_rng(seed, _DROPOUT_STREAM)
        perm = order_rng.permutation(count)
        cursor = 0
        hidden = adapters[0].m
        for step in range(opt.steps):
            if cursor + batch > count:
                perm = order_rng.permutation(count)
                cursor = 0
            idx = perm[cursor : cursor + batch]
            cursor += batch
            xb = np.ascontiguousarray(d["x_train"][:, idx])
            masks = (
                dropout_mask(drop_rng, xb.shape, adapters[0].config.dropout),
                dropout_mask(drop_rng, (hidden, batch), adapters[1].config.dropout),
            )
            loss, grads = mlp.loss_and_grads(adapters, d["w1"], d["w2"], xb, d["y_train"][idx], masks)
            if not np.isfinite(loss):
                raise DivergenceError(step, loss)
            losses.append(loss)
            _update(optimizer, grads, adapters, step)
            if (step + 1) % MASK_CHECK_EVERY == 0:
                _check_frozen(adapters, step + 1)
    else:
        ad = adapters[0]
        for step in range(opt.steps):
            loss, resid = _mse_state(ad, task)
            if not np.isfinite(loss):
                raise DivergenceError(step, loss)
            losses.append(loss)
            _update(optimizer, [backward_from_weight_grad(ad, (2.0 / resid.size) * resid)], adapters, step)
            if (step + 1) % MASK_CHECK_EVERY == 0:
                _check_frozen(adapters, step + 1)

    _check_frozen(adapters, opt.steps)
    if is_mlp:
        d = task.data
        final_loss = mlp.cross_entropy(mlp.logits(adapters, d["w1"], d["w2"], d["x_train"]), d["y_train"])
        final = {
            "final_loss": final_loss,
            "train_accuracy": mlp.accuracy(adapters, d["w1"], d["w2"], d["x_train"], d["y_train"]),
            "test_accuracy": mlp.accuracy(adapters, d["w1"], d["w2"], d["x_test"], d["y_test"]),
        }
    else:
        final = _mse_final(adapters[0], task)
    if not np.isfinite(final["final_loss"]):
        raise DivergenceError(opt.steps, final["final_loss"])
    final["best_loss"] = min(losses + [final["final_loss"]])
    final["numeric_rank"] = [rank_report(ad).numeric_rank_delta_w for ad in adapters]
    counts = [param_count(ad.config, ad.m, ad.n) for ad in adapters]
    final["trainable_params"] = sum(c.trainable for c in counts)
    final["lora_params"] = sum(ad.m * ad.r + ad.r * ad.n for ad in adapters)
    wall = time.perf_counter() - started

    config = {
        "task": task.to_dict(),
        "adapter": {k: v for k, v in adapters[0].config.__dict__.items()},
        "optimizer": opt.to_dict(),
    }
    return RunRecord(config=config, losses=losses, final=final, wall_time=wall, seed=seed, adapters=adapters)
