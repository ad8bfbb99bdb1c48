"""Training loops for the spotting and captioning models.

Adam with a reduce-on-plateau schedule (factor ``lr_factor``, patience
``plateau_patience`` epochs); training stops when the learning rate falls
below ``lr_stop``, after ``max_epochs``, or once the monitored loss is below
``target_loss``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..text import Vocabulary, tokenize
from .config import ModelConfig, TrainConfig
from .models import CaptioningModel, SpottingModel


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class HalfVideo:
    """Features of one half and the anchors (seconds) of its ground-truth comments."""

    features: np.ndarray
    fps: float
    anchors: list[float] = field(default_factory=list)
    game_id: str = ""
    half: int = 1

    @property
    def n_frames(self) -> int:
        return int(self.features.shape[0])


@dataclass
class CaptionSample:
    clip: np.ndarray  # T' x D
    tokens: list[int]  # without BOS/EOS


@dataclass
class TrainingLog:
    rows: list[tuple[int, str, float, float]] = field(default_factory=list)

    def add(self, epoch: int, split: str, loss: float, lr: float) -> None:
        self.rows.append((epoch, split, float(loss), float(lr)))

    def losses(self, split: str = "train") -> list[float]:
        return [r[2] for r in self.rows if r[1] == split]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "split", "loss", "lr"])
            for e, s, loss, lr in self.rows:
                w.writerow([e, s, f"{loss:.8g}", f"{lr:.8g}"])


class Rng:
    """The single seeded source of randomness for a training run."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.np = np.random.default_rng(self.seed)
        self.torch = torch.Generator().manual_seed(self.seed)

    def reseed_global(self) -> None:
        # dropout draws from torch's global generator
        torch.manual_seed(int(self.np.integers(2**31)))


def frames(seconds: float, fps: float) -> int:
    return max(1, int(round(seconds * fps)))


def anchor_frame(t: float, fps: float) -> int:
    return int(math.floor(t * fps))


# ------------------------------------------------------------------ spotting

def sample_spotting_chunks(
    halves: Sequence[HalfVideo], chunk_seconds: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One foreground chunk per anchor plus as many background chunks.

    A chunk is foreground iff an anchor's frame falls inside it. Returns
    clips (N, L, D) and targets (N, 2) with (1, 0) for foreground.
    """
    clips, targets = [], []
    n_fg = 0
    for h in halves:
        L = frames(chunk_seconds, h.fps)
        if h.n_frames < L:
            continue
        af = sorted(anchor_frame(t, h.fps) for t in h.anchors)
        for f in af:
            lo, hi = max(0, f - L + 1), min(f, h.n_frames - L)
            if lo > hi:
                continue
            s = int(rng.integers(lo, hi + 1))
            clips.append(h.features[s : s + L])
            targets.append((1.0, 0.0))
            n_fg += 1
    usable = [h for h in halves if h.n_frames >= frames(chunk_seconds, h.fps)]
    n_bg = 0
    tries = 0
    while n_bg < n_fg and usable and tries < 100 * max(n_fg, 1):
        tries += 1
        h = usable[int(rng.integers(len(usable)))]
        L = frames(chunk_seconds, h.fps)
        s = int(rng.integers(0, h.n_frames - L + 1))
        if any(s <= anchor_frame(t, h.fps) < s + L for t in h.anchors):
            continue
        clips.append(h.features[s : s + L])
        targets.append((0.0, 1.0))
        n_bg += 1
    if not clips:
        raise ValueError("no training chunks: halves shorter than a chunk or no anchors")
    return np.stack(clips).astype(np.float32), np.asarray(targets, dtype=np.float32)


def _parameters(model: torch.nn.Module) -> list[torch.nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


def _optimizer(model, cfg: TrainConfig):
    opt = torch.optim.Adam(_parameters(model), lr=cfg.lr_init)
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, mode="min", factor=1.0 / cfg.lr_factor, patience=cfg.plateau_patience
    )
    return opt, sched


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i : i + size] for i in range(0, n, size)]


def spotting_loss(model: SpottingModel, clips: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    # same value as BCE on the sigmoid outputs, without the clamp at 0 and 1
    return F.binary_cross_entropy_with_logits(model.logits(clips), targets)


def _fit(model, cfg: TrainConfig, rng: Rng, epoch_data, eval_loss, log: TrainingLog):
    """Shared epoch loop. ``epoch_data()`` yields (n_items, batch_loss_fn)."""
    opt, sched = _optimizer(model, cfg)
    params = _parameters(model)
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        n, batch_loss = epoch_data()
        total, count = 0.0, 0
        for idx in _batches(n, cfg.batch_size, rng.np):
            loss = batch_loss(idx)
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, float(loss))
            if params:
                opt.zero_grad()
                loss.backward()
                opt.step()
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        train_loss = total / max(count, 1)
        lr = opt.param_groups[0]["lr"]
        log.add(epoch, "train", train_loss, lr)
        monitored = train_loss
        if eval_loss is not None:
            model.eval()
            with torch.no_grad():
                monitored = float(eval_loss())
            if not math.isfinite(monitored):
                raise TrainingDiverged(epoch, monitored)
            log.add(epoch, "valid", monitored, lr)
        sched.step(monitored)
        if opt.param_groups[0]["lr"] < cfg.lr_stop:
            break
        if cfg.target_loss is not None and monitored < cfg.target_loss:
            break
    model.eval()
    return log


def spotting_train(
    halves: Sequence[HalfVideo],
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    valid: Sequence[HalfVideo] | None = None,
    model: SpottingModel | None = None,
) -> tuple[SpottingModel, TrainingLog]:
    """Train (or continue training) a spotting model on random chunks.

    Chunks are resampled every epoch. The validation set, when given, is
    sampled once with a fixed draw and monitored by the LR schedule.
    """
    if not halves:
        raise ValueError("empty training set")
    rng = Rng(cfg.seed)
    if model is None:
        model = new_spotting_model(model_cfg or ModelConfig(), rng, halves)
    dtype = next(model.parameters()).dtype
    rng.reseed_global()

    def epoch_data():
        clips, targets = sample_spotting_chunks(halves, cfg.chunk_seconds, rng.np)
        c, t = torch.from_numpy(clips).to(dtype), torch.from_numpy(targets).to(dtype)
        return len(c), lambda idx: spotting_loss(model, c[idx], t[idx])

    eval_loss = None
    if valid:
        vc, vt = sample_spotting_chunks(valid, cfg.chunk_seconds, np.random.default_rng(cfg.seed + 1))
        vc_t, vt_t = torch.from_numpy(vc).to(dtype), torch.from_numpy(vt).to(dtype)
        eval_loss = lambda: spotting_loss(model, vc_t, vt_t)  # noqa: E731
    log = _fit(model, cfg, rng, epoch_data, eval_loss, TrainingLog())
    return model, log


def new_spotting_model(model_cfg: ModelConfig, rng: Rng, halves: Sequence[HalfVideo] = ()) -> SpottingModel:
    model = SpottingModel(model_cfg, rng.torch)
    _seed_from_features(model, halves, rng)
    return model


def _seed_from_features(model, halves: Sequence[HalfVideo], rng: Rng) -> None:
    if not halves:
        return
    feats = np.concatenate([h.features for h in halves], axis=0)
    take = rng.np.choice(len(feats), size=min(len(feats), 2000), replace=False)
    sample = torch.from_numpy(np.ascontiguousarray(feats[np.sort(take)])).to(next(model.parameters()).dtype)
    model.aggregator.seed_centers(sample, rng.torch)


# ---------------------------------------------------------------- captioning

def caption_clip(h: HalfVideo, t: float, window_seconds: float) -> np.ndarray:
    """Frames of ``[t - window/2, t + window/2]``, shifted to stay inside the half."""
    L = frames(window_seconds, h.fps)
    if h.n_frames <= L:
        return h.features
    start = int(round((t - window_seconds / 2.0) * h.fps))
    start = min(max(start, 0), h.n_frames - L)
    return h.features[start : start + L]


def caption_samples(
    halves: Sequence[HalfVideo], captions: Sequence[Sequence[str]], vocab: Vocabulary, window_seconds: float
) -> list[CaptionSample]:
    """Pair every anchor of every half with its caption text (one list per half, same order)."""
    out = []
    for h, texts in zip(halves, captions):
        if len(texts) != len(h.anchors):
            raise ValueError(f"{h.game_id} half {h.half}: {len(h.anchors)} anchors but {len(texts)} captions")
        for t, text in zip(h.anchors, texts):
            out.append(CaptionSample(caption_clip(h, t, window_seconds), vocab.encode(tokenize(text))))
    return out


def pack_tokens(seqs: Sequence[Sequence[int]], vocab: Vocabulary) -> tuple[torch.Tensor, torch.Tensor]:
    """Decoder inputs [BOS, w1..wn] and targets [w1..wn, EOS], PAD-filled."""
    S = max(len(s) for s in seqs) + 1
    inputs = torch.full((len(seqs), S), vocab.pad_id, dtype=torch.long)
    targets = torch.full((len(seqs), S), vocab.pad_id, dtype=torch.long)
    for i, s in enumerate(seqs):
        inputs[i, 0] = vocab.bos_id
        inputs[i, 1 : len(s) + 1] = torch.tensor(s, dtype=torch.long)
        targets[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        targets[i, len(s)] = vocab.eos_id
    return inputs, targets


def caption_loss(
    model: CaptioningModel,
    clips: torch.Tensor,
    inputs: torch.Tensor,
    targets: torch.Tensor,
    pad_id: int,
    ratio: float = 1.0,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Token cross-entropy averaged over non-PAD target positions."""
    v = model.aggregator(clips)
    if ratio >= 1.0:
        logits = model.head.teacher_forced_logits(v, inputs)
    else:
        logits, _ = model.head.mixed_logits(v, inputs, ratio, generator)
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), ignore_index=pad_id)


def _group_by_length(samples: Sequence[CaptionSample]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.clip.shape[0], []).append(i)
    return groups


def caption_train(
    samples: Sequence[CaptionSample],
    vocab: Vocabulary,
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    valid: Sequence[CaptionSample] | None = None,
    model: CaptioningModel | None = None,
) -> tuple[CaptioningModel, TrainingLog]:
    if not samples:
        raise ValueError("empty training set")
    rng = Rng(cfg.seed)
    if model is None:
        model = new_captioning_model(model_cfg or ModelConfig(), len(vocab), rng, [s.clip for s in samples])
    if model.head.vocab_size != len(vocab):
        raise ValueError(f"model vocabulary {model.head.vocab_size} != {len(vocab)}")
    dtype = next(model.parameters()).dtype
    rng.reseed_global()

    def tensors(subset: Sequence[CaptionSample]):
        clips = torch.from_numpy(np.stack([s.clip for s in subset]).astype(np.float64)).to(dtype)
        inputs, targets = pack_tokens([s.tokens for s in subset], vocab)
        return clips, inputs, targets

    groups = _group_by_length(samples)

    def epoch_data():
        # batches never mix clip lengths
        order = [(L, idx) for L, members in sorted(groups.items()) for idx in _batches(len(members), cfg.batch_size, rng.np)]
        flat = [[groups[L][i] for i in idx] for L, idx in order]

        def batch_loss(k):
            members = flat[int(k[0])]
            c, i, t = tensors([samples[m] for m in members])
            return caption_loss(model, c, i, t, vocab.pad_id, cfg.teacher_forcing_ratio, rng.torch)

        return len(flat), batch_loss

    eval_loss = None
    if valid:
        vgroups = _group_by_length(valid)
        vt = [tensors([valid[i] for i in members]) for _, members in sorted(vgroups.items())]
        weights = [len(members) for _, members in sorted(vgroups.items())]

        def eval_loss():
            losses = [float(caption_loss(model, c, i, t, vocab.pad_id)) for c, i, t in vt]
            return sum(w * x for w, x in zip(weights, losses)) / sum(weights)

    # one "item" per batch; _fit shuffles batch order
    inner = TrainConfig.from_dict({**cfg.to_dict(), "batch_size": 1})
    log = _fit(model, inner, rng, epoch_data, eval_loss, TrainingLog())
    return model, log


def new_captioning_model(model_cfg: ModelConfig, vocab_size: int, rng: Rng, clips: Sequence[np.ndarray] = ()) -> CaptioningModel:
    model = CaptioningModel(model_cfg, vocab_size, rng.torch)
    if len(clips):
        _seed_from_features(model, [HalfVideo(np.concatenate(list(clips)), 1.0)], rng)
    return model


@torch.no_grad()
def caption_cross_entropy(model: CaptioningModel, samples: Sequence[CaptionSample], vocab: Vocabulary) -> float:
    """Teacher-forced CE over ``samples`` with dropout off."""
    model.eval()
    dtype = next(model.parameters()).dtype
    total, count = 0.0, 0
    for _, members in sorted(_group_by_length(samples).items()):
        sub = [samples[i] for i in members]
        clips = torch.from_numpy(np.stack([s.clip for s in sub]).astype(np.float64)).to(dtype)
        inputs, targets = pack_tokens([s.tokens for s in sub], vocab)
        logits = model(clips, inputs)
        n = int((targets != vocab.pad_id).sum())
        total += float(F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), ignore_index=vocab.pad_id, reduction="sum"))
        count += n
    return total / max(count, 1)
