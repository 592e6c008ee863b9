"""Desk-scale tasks, optimiser, training loop and ablations."""

from .ablation import AblationResult, ablation_suite
from .optim import AdamW, OptimizerConfig, large_model_preset
from .tasks import KINDS, Task, make_task
from .train import RunRecord, build_adapters, train

__all__ = [
    "AblationResult",
    "AdamW",
    "KINDS",
    "OptimizerConfig",
    "RunRecord",
    "Task",
    "ablation_suite",
    "build_adapters",
    "make_task",
    "large_model_preset",
    "train",
]
