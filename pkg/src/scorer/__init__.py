"""Toy conditional diffusion scorer: schedule, denoiser, adapter, guidance, training, sampling"""
from .adapter import ConditioningAdapter, predict_with_adapter
from .conditioning import ConditionSpec, describe_condition
from .denoiser import Denoiser, from_model_space, to_model_space
from .guidance import cfg_predict, predict_noise
from .sampling import sample
from .schedule import DiffusionSchedule, make_schedule, schedule_from_dict
from .training import (
    AdapterTrainingConfig,
    ScorerTrainingConfig,
    train_adapter,
    train_denoiser,
)

__all__ = [
    "ConditioningAdapter",
    "predict_with_adapter",
    "ConditionSpec",
    "describe_condition",
    "Denoiser",
    "from_model_space",
    "to_model_space",
    "cfg_predict",
    "predict_noise",
    "sample",
    "DiffusionSchedule",
    "make_schedule",
    "schedule_from_dict",
    "AdapterTrainingConfig",
    "ScorerTrainingConfig",
    "train_adapter",
    "train_denoiser",
]
