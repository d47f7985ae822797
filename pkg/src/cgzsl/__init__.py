"""Continual generalized zero-shot learning with a cosine-similarity GAN."""

from .config import RunConfig
from .data import Dataset, load_dataset, save_dataset, synth_dataset
from .errors import (
    CGZSLError,
    ContractError,
    FormatError,
    NumericalError,
    ScheduleError,
    ShapeError,
    ValidationError,
)
from .model import CGZSLModel, ModelConfig
from .report import ExperimentReport, TaskEval, read_report, write_report
from .schedule import TaskSchedule, TaskSpec, build_schedule, preset_schedule
from .train import run_experiment

__version__ = "0.1.0"

__all__ = [
    "CGZSLError",
    "CGZSLModel",
    "ContractError",
    "Dataset",
    "ExperimentReport",
    "FormatError",
    "ModelConfig",
    "NumericalError",
    "RunConfig",
    "ScheduleError",
    "ShapeError",
    "TaskEval",
    "TaskSchedule",
    "TaskSpec",
    "ValidationError",
    "build_schedule",
    "load_dataset",
    "preset_schedule",
    "read_report",
    "run_experiment",
    "save_dataset",
    "synth_dataset",
    "write_report",
]
