from .io import load_model, save_model
from .model import ModelParams, ModelSpec, backward, forward, init_params, receptive_field
from .optim import AdamState, PlateauSchedule, adam_step
from .train import EpochLog, TrainConfig, infer, log_to_csv, loss_and_grad, train

__all__ = [
    "AdamState", "EpochLog", "ModelParams", "ModelSpec", "PlateauSchedule", "TrainConfig",
    "adam_step", "backward", "forward", "infer", "init_params", "load_model", "log_to_csv",
    "loss_and_grad", "receptive_field", "save_model", "train",
]
