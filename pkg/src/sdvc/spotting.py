"""Single-timestamp spotting: temporal NMS and mAP at a tolerance."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import GameClock


@dataclass(frozen=True)
class SpotPrediction:
    clock: GameClock
    confidence: float
    caption: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass
class PredictionSet:
    game_id: str
    spots: list[SpotPrediction] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.spots = sorted(self.spots, key=lambda s: s.clock)

    def __len__(self) -> int:
        return len(self.spots)

    def to_dict(self) -> dict:
        preds = []
        for s in self.spots:
            d = {"gameTime": s.clock.format(), "confidence": round(float(s.confidence), 6)}
            if s.caption is not None:
                d["comment"] = s.caption
            preds.append(d)
        return {"game_id": self.game_id, "predictions": preds}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PredictionSet":
        spots = [
            SpotPrediction(GameClock.parse(p["gameTime"]), float(p["confidence"]), p.get("comment"))
            for p in raw.get("predictions", [])
        ]
        return cls(str(raw["game_id"]), spots)


def write_prediction_file(path: str | Path, preds: PredictionSet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(preds.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_prediction_dir(root: str | Path, sets: Mapping[str, PredictionSet]) -> None:
    for gid, ps in sorted(sets.items()):
        write_prediction_file(Path(root) / f"{gid}.json", ps)


def load_prediction_dir(root: str | Path) -> dict[str, PredictionSet]:
    root = Path(root)
    # config.json is the command echo written next to the predictions
    paths = [root] if root.is_file() else sorted(p for p in root.rglob("*.json") if p.name != "config.json")
    out: dict[str, PredictionSet] = {}
    for p in paths:
        ps = PredictionSet.from_dict(json.loads(p.read_text(encoding="utf-8")))
        if ps.game_id in out:
            raise ValueError(f"duplicate prediction file for game {ps.game_id!r}: {p}")
        out[ps.game_id] = ps
    return out


# ----------------------------------------------------------------------- NMS

def nms(spots: Sequence[SpotPrediction], window_seconds: float) -> list[SpotPrediction]:
    """Greedy temporal suppression.

    The most confident spot is kept and every other spot of the same half
    within ``window_seconds`` of it is dropped; repeat. Ties go to the
    earlier clock. Output is in clock order.
    """
    if window_seconds <= 0:
        raise ValueError("window_seconds must be > 0")
    kept: list[SpotPrediction] = []
    for s in sorted(spots, key=lambda s: (-s.confidence, s.clock)):
        if all(k.clock.half != s.clock.half or abs(k.clock.seconds - s.clock.seconds) > window_seconds for k in kept):
            kept.append(s)
    return sorted(kept, key=lambda s: s.clock)


# ----------------------------------------------------------------- matching

def tolerance_radius(delta: float, window: str = "half") -> float:
    """Largest accepted |dt| for tolerance ``delta``.

    ``"half"`` reads delta as a window of total width delta centred on the
    ground truth; ``"full"`` accepts |dt| <= delta.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if window == "half":
        return delta / 2.0
    if window == "full":
        return float(delta)
    raise ValueError(f"unknown window mode {window!r}")


def match_spots(
    preds: Sequence[SpotPrediction], gts: Sequence[GameClock], radius: float
) -> tuple[list[SpotPrediction], np.ndarray]:
    """Confidence-ordered one-to-one matching to the nearest free ground truth.

    Returns predictions in processing order and a boolean true-positive mask.
    """
    order = sorted(preds, key=lambda s: (-s.confidence, s.clock))
    gt_sorted = sorted(gts)
    free = [True] * len(gt_sorted)
    tp = np.zeros(len(order), dtype=bool)
    for i, p in enumerate(order):
        best, best_d = -1, None
        for j, g in enumerate(gt_sorted):
            if not free[j] or g.half != p.clock.half:
                continue
            d = abs(g.seconds - p.clock.seconds)
            if d <= radius and (best_d is None or d < best_d):
                best, best_d = j, d
        if best >= 0:
            free[best] = False
            tp[i] = True
    return order, tp


def average_precision(
    preds: Sequence[SpotPrediction],
    gts: Sequence[GameClock],
    delta: float,
    window: str = "half",
    interpolation: str = "all-point",
) -> float:
    """Area under the interpolated precision/recall curve.

    Precision and recall are taken once per distinct confidence level, so
    tied predictions enter the curve together.
    """
    radius = tolerance_radius(delta, window)
    if not gts:
        return 1.0 if not preds else 0.0
    if not preds:
        return 0.0
    order, tp = match_spots(preds, gts, radius)
    conf = np.array([p.confidence for p in order])
    # last index of every confidence level
    ends = np.flatnonzero(np.r_[conf[1:] != conf[:-1], True])
    cum_tp = np.cumsum(tp)[ends]
    precision = cum_tp / (ends + 1)
    recall = cum_tp / len(gts)
    return _interpolated_area(precision, recall, interpolation)


def _interpolated_area(precision: np.ndarray, recall: np.ndarray, interpolation: str) -> float:
    if interpolation == "all-point":
        env = np.maximum.accumulate(precision[::-1])[::-1]
        steps = np.diff(np.r_[0.0, recall])
        return float(np.sum(steps * env))
    if interpolation == "11-point":
        total = 0.0
        for r in np.linspace(0, 1, 11):
            mask = recall >= r - 1e-12
            total += precision[mask].max() if mask.any() else 0.0
        return total / 11.0
    raise ValueError(f"unknown interpolation {interpolation!r}")


def map_at_deltas(
    predictions: Mapping[str, Sequence[SpotPrediction] | PredictionSet],
    ground_truth: Mapping[str, Sequence[GameClock]],
    deltas: Sequence[float],
    window: str = "half",
) -> dict[float, float]:
    """Per-game AP averaged over the ground-truth games, for every delta."""
    if not deltas:
        raise ValueError("deltas must be nonempty")
    stray = sorted(set(predictions) - set(ground_truth))
    if stray:
        raise KeyError(f"predictions for games absent from ground truth: {stray}")
    games = sorted(ground_truth)
    out = {}
    for delta in deltas:
        aps = []
        for g in games:
            p = predictions.get(g, [])
            spots = p.spots if isinstance(p, PredictionSet) else list(p)
            aps.append(average_precision(spots, ground_truth[g], delta, window))
        out[float(delta)] = float(np.mean(aps)) if aps else 0.0
    return out
