from .evaluation import EvalReport, evaluate, grouped_cv
from .features import (
    MODES,
    TASKS,
    FeatureSpace,
    FeatureVector,
    extract_features,
    prune_rare,
)
from .logreg import LogRegModel, objective, train_logreg
from .tasks import TASK_DEFAULTS, TaskConfig, TaskResult, run_task, task_config

__all__ = [
    "EvalReport",
    "FeatureSpace",
    "FeatureVector",
    "LogRegModel",
    "MODES",
    "TASKS",
    "TASK_DEFAULTS",
    "TaskConfig",
    "TaskResult",
    "evaluate",
    "extract_features",
    "grouped_cv",
    "objective",
    "prune_rare",
    "run_task",
    "task_config",
    "train_logreg",
]
