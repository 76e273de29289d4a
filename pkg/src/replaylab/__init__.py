"""Continual-learning experiments: batch-level experience replay with review."""

from .augment import AugmentPlan, apply_plan
from .config import RunConfig, load_run_config, parse_run_config, serialize_run_config
from .learner import FrozenFeaturizer, LearnerParams, SgdConfig, fresh_learner
from .memory import ReplayMemory
from .metrics import MetricsLog, avg_val_acc, final_acc, resource_report
from .runner import execute_ablation, execute_run
from .streams import (
    LabeledExample,
    ScenarioSpec,
    StreamBatch,
    SyntheticDriftModel,
    generate_scenario,
    load_corpus,
)
from .trainer import (
    MultiTaskModel,
    RunResult,
    TrainerConfig,
    review,
    train_ber,
    train_finetune_baseline,
    train_multitask_nc,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentPlan",
    "apply_plan",
    "RunConfig",
    "load_run_config",
    "parse_run_config",
    "serialize_run_config",
    "FrozenFeaturizer",
    "LearnerParams",
    "SgdConfig",
    "fresh_learner",
    "ReplayMemory",
    "MetricsLog",
    "avg_val_acc",
    "final_acc",
    "resource_report",
    "execute_ablation",
    "execute_run",
    "LabeledExample",
    "ScenarioSpec",
    "StreamBatch",
    "SyntheticDriftModel",
    "generate_scenario",
    "load_corpus",
    "MultiTaskModel",
    "RunResult",
    "TrainerConfig",
    "review",
    "train_ber",
    "train_finetune_baseline",
    "train_multitask_nc",
    "__version__",
]
