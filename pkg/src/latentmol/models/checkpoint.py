"""VAE checkpoint files: a text header plus the tensor blocks."""

from __future__ import annotations

from pathlib import Path

from latentmol.codec.vocab import Vocab
from latentmol.errors import IncompatibleCheckpoint
from latentmol.models.loss import BetaSchedule
from latentmol.models.train import TrainConfig, VaeCheckpoint
from latentmol.models.vae import SequenceVAE, VaeConfig
from latentmol.tensor import io
from latentmol.tensor.core import Tensor

KIND = "vae"


def header_for(ckpt: VaeCheckpoint) -> dict[str, str]:
    c, t = ckpt.model.config, ckpt.train
    return {
        "kind": KIND,
        "arch": c.arch,
        "decoder": c.decoder,
        "latent_dim": str(c.latent_dim),
        "hidden": str(c.hidden),
        "layers": str(c.layers),
        "heads": str(c.heads),
        "max_len": str(c.max_len),
        "denoise_rate": repr(c.denoise_rate),
        "vocab_size": str(len(ckpt.vocab)),
        "vocab_digest": ckpt.vocab.digest(),
        "vocab": " ".join(ckpt.vocab.tokens),
        "beta_max": repr(t.beta.beta_max),
        "cycle": str(t.beta.cycle),
        "ramp": repr(t.beta.ramp),
        "steps": str(t.steps),
        "batch_size": str(t.batch_size),
        "lr": repr(t.lr),
        "seed": str(t.seed),
    }


def save_vae(path: str | Path, ckpt: VaeCheckpoint) -> None:
    io.save(path, header_for(ckpt), ckpt.model.state())


def load_vae(path: str | Path) -> VaeCheckpoint:
    header, tensors = io.load(path)
    if header.get("kind") != KIND:
        raise IncompatibleCheckpoint(f"{path} is not a VAE checkpoint")
    try:
        vocab = Vocab(header["vocab"].split(" "))
        config = VaeConfig(
            decoder=header["decoder"],
            latent_dim=int(header["latent_dim"]),
            hidden=int(header["hidden"]),
            layers=int(header["layers"]),
            heads=int(header["heads"]),
            max_len=int(header["max_len"]),
            denoise_rate=float(header["denoise_rate"]),
        )
        train = TrainConfig(
            steps=int(header["steps"]),
            batch_size=int(header["batch_size"]),
            lr=float(header["lr"]),
            seed=int(header["seed"]),
            beta=BetaSchedule(float(header["beta_max"]), int(header["cycle"]), float(header["ramp"])),
        )
    except (KeyError, ValueError) as exc:
        raise IncompatibleCheckpoint(f"{path}: bad header ({exc})") from None
    if vocab.digest() != header.get("vocab_digest"):
        raise IncompatibleCheckpoint(f"{path}: vocab digest mismatch")
    params = {k: Tensor(v, requires_grad=True) for k, v in tensors.items()}
    try:
        model = SequenceVAE(config, len(vocab), params=params)
    except Exception as exc:
        raise IncompatibleCheckpoint(f"{path}: {exc}") from None
    return VaeCheckpoint(model, vocab, train)


def check_compatible(ckpt: VaeCheckpoint, config: VaeConfig, vocab: Vocab | None = None) -> None:
    if ckpt.model.config != config:
        raise IncompatibleCheckpoint(f"checkpoint dims {ckpt.model.config} differ from config {config}")
    if vocab is not None and vocab.digest() != ckpt.vocab.digest():
        raise IncompatibleCheckpoint("checkpoint was trained with a different vocabulary")
