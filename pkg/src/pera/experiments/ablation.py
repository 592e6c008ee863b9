"""Variant ablation: identical budgets and initial factors across the variant lattice."""

import io
from dataclasses import dataclass

import numpy as np

from ..adapter import AdapterConfig
from ..errors import ConfigError
from ..expansion import VARIANTS
from .tasks import make_task
from .train import build_adapters, train


@dataclass
class AblationResult:
    rows: list  # one dict per (variant, seed)
    variants: tuple

    def final_losses(self, variant):
        return np.array([row["final_loss"] for row in self.rows if row["variant"] == variant])

    def by_seed(self, variant):
        return {row["seed"]: row["final_loss"] for row in self.rows if row["variant"] == variant}

    def summary(self):
        out = {}
        for v in self.variants:
            vals = self.final_losses(v)
            out[v] = {
                "runs": int(vals.size),
                "mean_final_loss": float(vals.mean()),
                "std_final_loss": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                "median_final_loss": float(np.median(vals)),
            }
        return out

    def wins(self, variant, baseline="lora"):
        """Seeds on which ``variant`` ends strictly below ``baseline``."""
        ours, base = self.by_seed(variant), self.by_seed(baseline)
        return sum(1 for s in ours if ours[s] < base[s])

    def summary_csv(self):
        buf = io.StringIO()
        buf.write("variant,runs,mean_final_loss,std_final_loss,median_final_loss\n")
        for v, stats in self.summary().items():
            buf.write(
                f"{v},{stats['runs']},{stats['mean_final_loss']!r},"
                f"{stats['std_final_loss']!r},{stats['median_final_loss']!r}\n"
            )
        return buf.getvalue()

    def runs_csv(self):
        buf = io.StringIO()
        buf.write("variant,seed,initial_loss,final_loss\n")
        for row in sorted(self.rows, key=lambda r: (self.variants.index(r["variant"]), r["seed"])):
            buf.write(f"{row['variant']},{row['seed']},{row['initial_loss']!r},{row['final_loss']!r}\n")
        return buf.getvalue()


def ablation_suite(kind, task_params, r, seeds, opt, variants=VARIANTS, adapter_options=None):
    """Train every variant on every seed; per seed all variants start from the same ``B`` and ``A``."""
    seeds = list(seeds)
    if len(seeds) < 3:
        raise ConfigError(f"ablation needs at least 3 seeds, got {len(seeds)}")
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    rows = []
    for seed in seeds:
        task = make_task(kind, task_params, seed)
        for variant in variants:
            cfg = AdapterConfig(r=r, variant=variant, seed=seed, **(adapter_options or {}))
            record = train(build_adapters(task, cfg), task, opt)
            rows.append(
                {
                    "variant": variant,
                    "seed": seed,
                    "initial_loss": record.losses[0] if record.losses else record.final["final_loss"],
                    "final_loss": record.final["final_loss"],
                }
            )
    return AblationResult(rows=rows, variants=tuple(variants))
