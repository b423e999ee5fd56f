"""Sequence VAEs with NAR, AR and CMLMC decoders."""

from latentmol.models.checkpoint import check_compatible, load_vae, save_vae
from latentmol.models.loss import (
    BetaSchedule,
    beta_at,
    elbo_loss,
    kl_divergence,
    mask_schedule,
    sequence_lengths,
    token_weights,
)
from latentmol.models.train import TrainConfig, VaeCheckpoint, fit, token_accuracy, train_vae
from latentmol.models.vae import ARCHITECTURES, SequenceVAE, VaeConfig

__all__ = [
    "ARCHITECTURES", "BetaSchedule", "SequenceVAE", "TrainConfig", "VaeCheckpoint", "VaeConfig",
    "beta_at", "check_compatible", "elbo_loss", "fit", "kl_divergence", "load_vae", "mask_schedule",
    "save_vae", "sequence_lengths", "token_accuracy", "token_weights", "train_vae",
]
