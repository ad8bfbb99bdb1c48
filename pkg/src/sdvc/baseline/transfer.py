"""Aggregator weight transfer between the spotting and captioning models."""

from __future__ import annotations

import copy

import torch

from .config import ModelConfig
from .models import CaptioningModel, SpottingModel
from .train import Rng

MODES = ("scratch", "frozen", "fine-tuned")
# the five aggregator regimes compared for the full pipeline
REGIMES = {
    "scratch": (None, "scratch"),
    "spot->capt frozen": ("spotting", "frozen"),
    "spot->capt fine-tuned": ("spotting", "fine-tuned"),
    "capt->spot frozen": ("captioning", "frozen"),
    "capt->spot fine-tuned": ("captioning", "fine-tuned"),
}


def transfer_weights(
    source: SpottingModel | CaptioningModel | None,
    role: str,
    mode: str,
    model_cfg: ModelConfig,
    seed: int,
    vocab_size: int | None = None,
) -> SpottingModel | CaptioningModel:
    """Fresh target model for ``role`` ("spot" or "caption") whose aggregator is
    re-initialized (scratch), copied and frozen, or copied and left trainable."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    rng = Rng(seed)
    if role == "spot":
        target: SpottingModel | CaptioningModel = SpottingModel(model_cfg, rng.torch)
    elif role == "caption":
        if vocab_size is None:
            raise ValueError("captioning target needs vocab_size")
        target = CaptioningModel(model_cfg, vocab_size, rng.torch)
    else:
        raise ValueError(f"unknown role {role!r}")
    if mode == "scratch":
        return target
    if source is None:
        raise ValueError(f"mode {mode!r} needs a source model")
    src = source.aggregator.state_dict()
    dst = target.aggregator.state_dict()
    if set(src) != set(dst) or any(src[k].shape != dst[k].shape for k in src):
        shapes = {k: tuple(v.shape) for k, v in src.items()}
        raise ValueError(f"aggregator shapes differ: source {shapes}, target {({k: tuple(v.shape) for k, v in dst.items()})}")
    target.aggregator.load_state_dict(copy.deepcopy(src))
    target.to(next(source.parameters()).dtype)
    if mode == "frozen":
        for p in target.aggregator.parameters():
            p.requires_grad_(False)
    return target


def aggregator_bytes(model: torch.nn.Module) -> bytes:
    sd = model.aggregator.state_dict()
    return b"".join(sd[k].detach().cpu().contiguous().numpy().tobytes() for k in sorted(sd))
