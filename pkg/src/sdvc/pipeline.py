"""Glue between game documents, feature files and the baseline models."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from .baseline import (
    REGIMES,
    CaptioningModel,
    HalfVideo,
    ModelConfig,
    SpottingModel,
    TrainConfig,
    caption_samples,
    caption_train,
    sdvc_infer,
    spotting_train,
    transfer_weights,
)
from .baseline.checkpoint import load_into, load_meta, save_model
from .baseline.train import TrainingLog
from .corpus import GameDocument, load_features, write_features
from .spotting import PredictionSet
from .text import Vocabulary, build_vocabulary


@dataclass
class SplitManifest:
    train: list[str]
    valid: list[str]
    test: list[str]

    def __post_init__(self) -> None:
        if not self.train:
            raise ValueError("split manifest needs a nonempty train list")
        seen: dict[str, str] = {}
        for name in ("train", "valid", "test"):
            for g in getattr(self, name):
                if g in seen:
                    raise ValueError(f"game {g!r} is in both {seen[g]} and {name}")
                seen[g] = name

    @classmethod
    def load(cls, path: str | Path) -> "SplitManifest":
        raw = json.loads(Path(path).read_text())
        return cls(list(raw.get("train", [])), list(raw.get("valid", [])), list(raw.get("test", [])))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"train": self.train, "valid": self.valid, "test": self.test}, indent=2) + "\n")


def feature_path(root: str | Path, game_id: str, half: int) -> Path:
    return Path(root) / game_id / f"half{half}.sncf"


def save_game_features(root: str | Path, halves: Sequence[HalfVideo]) -> None:
    for h in halves:
        p = feature_path(root, h.game_id, h.half)
        p.parent.mkdir(parents=True, exist_ok=True)
        write_features(p, h.features)


def load_game_halves(root: str | Path, game_id: str, fps: float, doc: GameDocument | None = None, dim: int = 512) -> list[HalfVideo]:
    halves = []
    for half in (1, 2):
        p = feature_path(root, game_id, half)
        if not p.exists():
            continue
        seq = load_features(p, fps=fps, game_id=game_id, half=half, expected_dim=dim)
        anchors = [c.clock.seconds for c in doc.captions if c.clock.half == half] if doc else []
        halves.append(HalfVideo(seq.data, fps, anchors, game_id, half))
    if not halves:
        raise FileNotFoundError(f"no feature files for game {game_id!r} under {root}")
    return halves


def caption_texts(doc: GameDocument, halves: Sequence[HalfVideo], version: str = "anonymized") -> list[list[str]]:
    return [[c.text(version) for c in doc.captions if c.clock.half == h.half] for h in halves]


@dataclass
class TrainedBaseline:
    spotter: SpottingModel
    captioner: CaptioningModel
    vocab: Vocabulary
    spot_log: TrainingLog
    caption_log: TrainingLog


def train_baseline(
    train_games: Sequence[tuple[GameDocument, list[HalfVideo]]],
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    valid_games: Sequence[tuple[GameDocument, list[HalfVideo]]] = (),
    regime: str = "scratch",
    min_count: int = 5,
    vocab: Vocabulary | None = None,
    spot_cfg: TrainConfig | None = None,
    caption_cfg: TrainConfig | None = None,
) -> TrainedBaseline:
    """Train both models under one of the aggregator transfer regimes."""
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}, expected one of {sorted(REGIMES)}")
    spot_cfg = spot_cfg or cfg
    caption_cfg = caption_cfg or cfg
    if vocab is None:
        vocab = build_vocabulary([d for d, _ in train_games], min_count=min_count, field="anonymized")
    halves = [h for _, hs in train_games for h in hs]
    v_halves = [h for _, hs in valid_games for h in hs]
    samples = [
        s
        for d, hs in train_games
        for s in caption_samples(hs, caption_texts(d, hs), vocab, caption_cfg.caption_window_seconds)
    ]
    v_samples = [
        s
        for d, hs in valid_games
        for s in caption_samples(hs, caption_texts(d, hs), vocab, caption_cfg.caption_window_seconds)
    ]
    source, mode = REGIMES[regime]
    if source == "captioning":
        captioner, clog = caption_train(samples, vocab, caption_cfg, model_cfg, v_samples or None)
        target = transfer_weights(captioner, "spot", mode, model_cfg, spot_cfg.seed)
        spotter, slog = spotting_train(halves, spot_cfg, model_cfg, v_halves or None, model=target)
    else:
        spotter, slog = spotting_train(halves, spot_cfg, model_cfg, v_halves or None)
        target = None
        if source == "spotting":
            target = transfer_weights(spotter, "caption", mode, model_cfg, caption_cfg.seed, len(vocab))
        captioner, clog = caption_train(samples, vocab, caption_cfg, model_cfg, v_samples or None, model=target)
    return TrainedBaseline(spotter, captioner, vocab, slog, clog)


def save_baseline(out: str | Path, trained: TrainedBaseline, cfg: TrainConfig, model_cfg: ModelConfig, extra: dict | None = None) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    trained.vocab.save(out / "vocab.txt")
    meta = {"model_config": model_cfg.to_dict(), "train_config": cfg.to_dict(), "vocab_sha256": trained.vocab.sha256(), **(extra or {})}
    save_model(out / "spotting.ckpt", trained.spotter, {"role": "spotting", **meta})
    save_model(out / "captioning.ckpt", trained.captioner, {"role": "captioning", "vocab_size": len(trained.vocab), **meta})
    trained.spot_log.write_csv(out / "spotting_log.csv")
    trained.caption_log.write_csv(out / "captioning_log.csv")


def load_baseline(root: str | Path) -> tuple[SpottingModel, CaptioningModel, Vocabulary, TrainConfig]:
    root = Path(root)
    vocab = Vocabulary.load(root / "vocab.txt")
    meta = load_meta(root / "captioning.ckpt")
    if meta.get("vocab_sha256") != vocab.sha256():
        raise ValueError("vocabulary file does not match the checkpoint")
    model_cfg = ModelConfig.from_dict(meta["model_config"])
    cfg = TrainConfig.from_dict(meta["train_config"])
    g = torch.Generator().manual_seed(0)
    spotter = load_into(root / "spotting.ckpt", SpottingModel(model_cfg, g))
    captioner = load_into(root / "captioning.ckpt", CaptioningModel(model_cfg, len(vocab), g))
    return spotter.eval(), captioner.eval(), vocab, cfg


def infer_games(
    games: Sequence[tuple[str, list[HalfVideo]]],
    spotter: SpottingModel,
    captioner: CaptioningModel,
    vocab: Vocabulary,
    cfg: TrainConfig,
) -> dict[str, PredictionSet]:
    return {gid: sdvc_infer(hs, spotter, captioner, vocab, cfg, gid) for gid, hs in games}


def write_dataset(root: str | Path, games: Sequence, split: SplitManifest) -> None:
    """Lay out ``corpus/``, ``features/`` and ``split.json`` under ``root`` for games
    carrying a ``doc`` and ``halves`` (e.g. toy games)."""
    from .corpus import serialize_game_document

    root = Path(root)
    for g in games:
        p = root / "corpus" / g.doc.game_id / "Labels-caption.json"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(serialize_game_document(g.doc))
        save_game_features(root / "features", g.halves)
    split.save(root / "split.json")
