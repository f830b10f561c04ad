"""Synthetic grasp-sequence dataset and the cross-validation harness."""

from .scene import (
    OBJECT_CLASSES,
    GraspFrame,
    GraspRun,
    GraspError,
    generate_dataset,
    save_dataset,
    load_dataset,
    load_class_runs,
)
from .evaluate import (
    EvalReport,
    ExperimentConfig,
    pixel_accuracy,
    intersection_over_union,
    kfold_by_run,
    quartile_accuracy,
    run_experiment,
)

__all__ = [
    "OBJECT_CLASSES",
    "GraspFrame",
    "GraspRun",
    "GraspError",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "load_class_runs",
    "EvalReport",
    "ExperimentConfig",
    "pixel_accuracy",
    "intersection_over_union",
    "kfold_by_run",
    "quartile_accuracy",
    "run_experiment",
]
