from .config import POOLING_KINDS, ModelConfig, TrainConfig
from .infer import caption_at, foreground_curve, sdvc_infer, spotting_infer
from .models import Aggregator, CaptioningHead, CaptioningModel, SpottingHead, SpottingModel
from .train import (
    CaptionSample,
    HalfVideo,
    Rng,
    TrainingDiverged,
    TrainingLog,
    caption_cross_entropy,
    caption_samples,
    caption_train,
    spotting_train,
)
from .transfer import REGIMES, aggregator_bytes, transfer_weights

__all__ = [
    "POOLING_KINDS",
    "ModelConfig",
    "TrainConfig",
    "Aggregator",
    "SpottingHead",
    "SpottingModel",
    "CaptioningHead",
    "CaptioningModel",
    "HalfVideo",
    "CaptionSample",
    "Rng",
    "TrainingDiverged",
    "TrainingLog",
    "spotting_train",
    "caption_train",
    "caption_samples",
    "caption_cross_entropy",
    "spotting_infer",
    "foreground_curve",
    "caption_at",
    "sdvc_infer",
    "transfer_weights",
    "aggregator_bytes",
    "REGIMES",
]
