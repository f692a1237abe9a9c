"""Convolutional adversarial autoencoder: model, losses, training, checkpoints."""

from .checkpoint import load_checkpoint, read_tensors, save_checkpoint
from .losses import (
    GP_WEIGHT,
    PriorSamples,
    critic_loss_with_gp,
    generator_loss,
    one_hot,
    reconstruction_loss,
    sample_priors,
    supervised_loss,
)
from .model import CaaeModel, Decoder, Encoder, decide, param_count, predict
from .train import CaaeTrainer, EpochRecord, TrainConfig, TrainReport, evaluate, train

__all__ = [
    "GP_WEIGHT", "CaaeModel", "CaaeTrainer", "Decoder", "Encoder", "EpochRecord",
    "PriorSamples", "TrainConfig", "TrainReport", "critic_loss_with_gp", "decide", "evaluate",
    "generator_loss", "load_checkpoint", "one_hot", "param_count", "predict", "read_tensors",
    "reconstruction_loss", "sample_priors", "save_checkpoint", "supervised_loss", "train",
]
