"""Full-half inference: sliding-window spotting, NMS, then greedy captioning."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from ..corpus import GameClock
from ..spotting import PredictionSet, SpotPrediction, nms
from ..text import Vocabulary
from .config import TrainConfig
from .models import CaptioningModel, SpottingModel
from .train import HalfVideo, caption_clip, frames


@torch.no_grad()
def foreground_curve(h: HalfVideo, model: SpottingModel, chunk_seconds: float, batch: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Foreground probability of every window of ``chunk_seconds`` (stride one frame),
    with the time of each window centre."""
    model.eval()
    L = frames(chunk_seconds, h.fps)
    n = h.n_frames - L + 1
    if n <= 0:
        return np.zeros(0), np.zeros(0)
    dtype = next(model.parameters()).dtype
    feats = torch.from_numpy(np.ascontiguousarray(h.features)).to(dtype)
    windows = feats.unfold(0, L, 1).permute(0, 2, 1)  # n, L, D
    probs = torch.cat([model(windows[i : i + batch])[:, 0] for i in range(0, n, batch)])
    centres = (np.arange(n) + L / 2.0) / h.fps
    return probs.double().numpy(), centres


def spotting_infer(h: HalfVideo, model: SpottingModel, cfg: TrainConfig) -> list[SpotPrediction]:
    probs, centres = foreground_curve(h, model, cfg.chunk_seconds)
    spots = [
        SpotPrediction(GameClock(h.half, float(t)), float(np.clip(p, 0.0, 1.0)))
        for p, t in zip(probs, centres)
        if p >= cfg.min_confidence
    ]
    return nms(spots, cfg.nms_seconds)


@torch.no_grad()
def caption_at(
    h: HalfVideo, times: Sequence[float], model: CaptioningModel, vocab: Vocabulary, cfg: TrainConfig
) -> list[str]:
    """Greedy caption for a clip of ``caption_window_seconds`` around each time."""
    model.eval()
    if not len(times):
        return []
    dtype = next(model.parameters()).dtype
    out = []
    for t in times:
        clip = torch.from_numpy(np.ascontiguousarray(caption_clip(h, t, cfg.caption_window_seconds))).to(dtype)
        ids = model.greedy(clip.unsqueeze(0), vocab.bos_id, vocab.eos_id)[0]
        out.append(" ".join(vocab.decode(ids)))
    return out


def sdvc_infer(
    halves: Sequence[HalfVideo],
    spotter: SpottingModel,
    captioner: CaptioningModel,
    vocab: Vocabulary,
    cfg: TrainConfig,
    game_id: str = "",
) -> PredictionSet:
    """Spot every half of one game, then caption each proposal."""
    spots = []
    for h in halves:
        props = spotting_infer(h, spotter, cfg)
        texts = caption_at(h, [p.clock.seconds for p in props], captioner, vocab, cfg)
        spots.extend(SpotPrediction(p.clock, p.confidence, text) for p, text in zip(props, texts))
    return PredictionSet(game_id or (halves[0].game_id if halves else ""), spots)
