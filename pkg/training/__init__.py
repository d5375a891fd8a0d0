from training.optim import SGD, OptimizerState, sgd_step
from training.schedule import lr_at
from training.pretrain import TrainResult, pretrain_loop
from training.metatrain import metatrain_loop
from training.metatest import AccuracyReport, confidence_interval, metatest_loop

__all__ = [
    "SGD",
    "OptimizerState",
    "sgd_step",
    "lr_at",
    "TrainResult",
    "pretrain_loop",
    "metatrain_loop",
    "AccuracyReport",
    "confidence_interval",
    "metatest_loop",
]
