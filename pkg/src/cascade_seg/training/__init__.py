"""Training procedures for the one-step and sequential models."""

from .joint import evaluate_joint_objective
from .loop import EPOCH_COLUMNS, TrainingData, label_snapshot, run_phase, write_epochs_csv
from .one_step import build_one_step_network, train_one_step
from .sequential import (
    TumorStageData,
    build_cascade_networks,
    liver_masks,
    materialize_tumor_stage,
    stage_objective,
    train_sequential,
)

__all__ = [
    "evaluate_joint_objective",
    "EPOCH_COLUMNS",
    "TrainingData",
    "label_snapshot",
    "run_phase",
    "write_epochs_csv",
    "build_one_step_network",
    "train_one_step",
    "TumorStageData",
    "build_cascade_networks",
    "liver_masks",
    "materialize_tumor_stage",
    "stage_objective",
    "train_sequential",
]
