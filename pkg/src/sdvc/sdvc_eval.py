"""Task-level evaluation: windowed caption metrics, windowed SODA_c and the combined report.

The evaluation unit ("video") is one half. A game's score is the mean over
its halves and a corpus score is the mean over games.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import CaptionRecord, GameDocument
from .metrics import METRICS, VARIANTS, CiderScorer, ScoredPair, meteor_pair, score_pair
from .spotting import PredictionSet, SpotPrediction, map_at_deltas, tolerance_radius
from .text import tokenize

DEFAULT_DELTAS = (30.0,)
DEFAULT_TOLERANCES = (5.0, 30.0, 60.0)


@dataclass
class SdvcConfig:
    delta_seconds: float = 30.0
    window_halfwidth: float | None = None  # SODA interval half-width, None means delta / 2
    window: str = "half"  # tolerance semantics, see spotting.tolerance_radius
    averaging: str = "predictions"  # or "gt"
    text_version: str = "anonymized"
    metric_variants: dict = field(default_factory=lambda: dict(VARIANTS))

    def __post_init__(self) -> None:
        if self.delta_seconds <= 0:
            raise ValueError("delta_seconds must be > 0")
        if self.window_halfwidth is not None and self.window_halfwidth <= 0:
            raise ValueError("window_halfwidth must be > 0")
        if self.averaging not in ("predictions", "gt"):
            raise ValueError(f"unknown averaging {self.averaging!r}")

    @property
    def radius(self) -> float:
        return tolerance_radius(self.delta_seconds, self.window)

    @property
    def halfwidth(self) -> float:
        return self.window_halfwidth if self.window_halfwidth is not None else self.delta_seconds / 2.0

    def with_delta(self, delta: float) -> "SdvcConfig":
        return SdvcConfig(delta, self.window_halfwidth, self.window, self.averaging, self.text_version, dict(self.metric_variants))

    def to_dict(self) -> dict:
        return {
            "delta_seconds": self.delta_seconds,
            "window_halfwidth": self.halfwidth,
            "window": self.window,
            "averaging": self.averaging,
            "text_version": self.text_version,
            "metric_variants": dict(self.metric_variants),
        }


def _spots(preds: PredictionSet | Sequence[SpotPrediction]) -> list[SpotPrediction]:
    spots = preds.spots if isinstance(preds, PredictionSet) else list(preds)
    for s in spots:
        if s.caption is None:
            raise ValueError(f"prediction at {s.clock} has no caption text")
    return spots


def _halves(spots: Sequence[SpotPrediction], gts: Sequence[CaptionRecord]) -> list[int]:
    return sorted({s.clock.half for s in spots} | {g.clock.half for g in gts})


def gt_cider_scorer(gts: Sequence[CaptionRecord], text_version: str = "anonymized") -> CiderScorer:
    """CIDEr document frequencies with one document per ground-truth caption."""
    docs = [[tokenize(g.text(text_version))] for g in gts]
    return CiderScorer(docs if docs else [[[]]])


def _video_score_predictions(spots, gts, cfg: SdvcConfig, metric: str, scorer) -> float:
    if not spots:
        return 1.0 if not gts else 0.0
    refs_tok = [tokenize(g.text(cfg.text_version)) for g in gts]
    total = 0.0
    for s in spots:
        refs = [r for g, r in zip(gts, refs_tok) if abs(g.clock.seconds - s.clock.seconds) <= cfg.radius]
        if refs:
            total += score_pair(ScoredPair(tokenize(s.caption), refs), metric, scorer)
    return total / len(spots)


def _video_score_gt(spots, gts, cfg: SdvcConfig, metric: str, scorer) -> float:
    if not gts:
        return 1.0 if not spots else 0.0
    cands = [tokenize(s.caption) for s in spots]
    total = 0.0
    for g in gts:
        ref = [tokenize(g.text(cfg.text_version))]
        near = [c for s, c in zip(spots, cands) if abs(g.clock.seconds - s.clock.seconds) <= cfg.radius]
        if near:
            total += max(score_pair(ScoredPair(c, ref), metric, scorer) for c in near)
    return total / len(gts)


def windowed_metric(
    preds: PredictionSet | Sequence[SpotPrediction],
    gts: Sequence[CaptionRecord],
    cfg: SdvcConfig,
    metric: str,
    cider_scorer: CiderScorer | None = None,
) -> float:
    """Caption metric at tolerance delta for one game.

    Each generated caption is scored against every ground-truth caption of
    the same half whose anchor lies within the tolerance, as a
    multi-reference set; captions with no reference in reach score 0.
    With ``cfg.averaging == "gt"`` each ground-truth caption instead takes
    the best score among in-window generated captions.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    spots = _spots(preds)
    if metric == "cider" and cider_scorer is None:
        cider_scorer = gt_cider_scorer(gts, cfg.text_version)
    halves = _halves(spots, gts)
    if not halves:
        return 1.0
    video = _video_score_predictions if cfg.averaging == "predictions" else _video_score_gt
    scores = [
        video(
            [s for s in spots if s.clock.half == h],
            [g for g in gts if g.clock.half == h],
            cfg,
            metric,
            cider_scorer,
        )
        for h in halves
    ]
    return float(np.mean(scores))


# ---------------------------------------------------------------------- SODA

def tiou(a: tuple[float, float], b: tuple[float, float]) -> float:
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0]) if inter > 0 else (a[1] - a[0]) + (b[1] - b[0])
    return inter / union if union > 0 else 0.0


def soda_score_matrix(
    spots: Sequence[SpotPrediction], gts: Sequence[CaptionRecord], halfwidth: float, text_version: str = "anonymized"
) -> np.ndarray:
    """s[i, j] = tIoU(gt_i, pred_j) * METEOR(pred_j, gt_i), both sides in time order."""
    s = np.zeros((len(gts), len(spots)))
    for i, g in enumerate(gts):
        gi = (g.clock.seconds - halfwidth, g.clock.seconds + halfwidth)
        ref = tokenize(g.text(text_version))
        for j, p in enumerate(spots):
            pj = (p.clock.seconds - halfwidth, p.clock.seconds + halfwidth)
            iou = tiou(gi, pj)
            if iou > 0:
                s[i, j] = iou * meteor_pair(ScoredPair(tokenize(p.caption), [ref]))
    return s


def max_order_preserving_matching(scores: np.ndarray) -> tuple[float, list[tuple[int, int]]]:
    """Best total score over one-to-one matchings whose pairs increase in both indices."""
    n, m = scores.shape
    dp = np.zeros((n + 1, m + 1))
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dp[i, j] = max(dp[i - 1, j], dp[i, j - 1], dp[i - 1, j - 1] + scores[i - 1, j - 1])
    pairs = []
    i, j = n, m
    while i > 0 and j > 0:
        if dp[i, j] == dp[i - 1, j]:
            i -= 1
        elif dp[i, j] == dp[i, j - 1]:
            j -= 1
        else:
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
    return float(dp[n, m]), pairs[::-1]


def _soda_video(spots, gts, cfg: SdvcConfig) -> float:
    if not gts or not spots:
        return 1.0 if not gts and not spots else 0.0
    gts = sorted(gts, key=lambda g: g.clock)
    spots = sorted(spots, key=lambda s: s.clock)
    total, _ = max_order_preserving_matching(soda_score_matrix(spots, gts, cfg.halfwidth, cfg.text_version))
    precision, recall = total / len(spots), total / len(gts)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def soda_c_windowed(
    preds: PredictionSet | Sequence[SpotPrediction], gts: Sequence[CaptionRecord], cfg: SdvcConfig
) -> float:
    """SODA_c for one game with every anchor widened to [t - w, t + w]."""
    spots = _spots(preds)
    halves = _halves(spots, gts)
    if not halves:
        return 1.0
    return float(
        np.mean(
            [
                _soda_video([s for s in spots if s.clock.half == h], [g for g in gts if g.clock.half == h], cfg)
                for h in halves
            ]
        )
    )


# -------------------------------------------------------------------- report

@dataclass
class SdvcReport:
    config: dict
    spotting: dict[str, float]
    captioning: dict[str, dict[str, float]]
    soda_c: float
    per_game: dict[str, dict]

    def to_dict(self) -> dict:
        r6 = lambda x: round(float(x), 6)  # noqa: E731
        return {
            "config": self.config,
            "spotting": {k: r6(v) for k, v in self.spotting.items()},
            "captioning": {d: {k: r6(v) for k, v in m.items()} for d, m in self.captioning.items()},
            "soda_c": r6(self.soda_c),
            "per_game": {
                g: {
                    "spotting": {k: r6(v) for k, v in row["spotting"].items()},
                    "captioning": {d: {k: r6(v) for k, v in m.items()} for d, m in row["captioning"].items()},
                }
                for g, row in self.per_game.items()
            },
        }


def _fmt(x: float) -> str:
    return f"{x:g}"


def evaluate_sdvc(
    predictions: Mapping[str, PredictionSet],
    ground_truth: Mapping[str, GameDocument] | Sequence[GameDocument],
    cfg: SdvcConfig | None = None,
    deltas: Sequence[float] = DEFAULT_DELTAS,
    tolerances: Sequence[float] = DEFAULT_TOLERANCES,
) -> SdvcReport:
    """mAP at every spotting tolerance, the four caption metrics and SODA_c at every delta."""
    cfg = cfg or SdvcConfig()
    if not isinstance(ground_truth, Mapping):
        ground_truth = {d.game_id: d for d in ground_truth}
    missing = sorted(set(ground_truth) - set(predictions))
    if missing:
        raise KeyError(f"no prediction file for games {missing}")
    games = sorted(ground_truth)
    all_gts = [c for g in games for c in ground_truth[g].captions]
    scorer = gt_cider_scorer(all_gts, cfg.text_version)

    gt_clocks = {g: [c.clock for c in ground_truth[g].captions] for g in games}
    spotting = {f"mAP@{_fmt(d)}": v for d, v in map_at_deltas(predictions, gt_clocks, tolerances, cfg.window).items()}
    per_game: dict[str, dict] = {
        g: {
            "spotting": {
                f"mAP@{_fmt(d)}": v
                for d, v in map_at_deltas({g: predictions[g]}, {g: gt_clocks[g]}, tolerances, cfg.window).items()
            },
            "captioning": {},
        }
        for g in games
    }

    captioning: dict[str, dict[str, float]] = {}
    for delta in deltas:
        c = cfg.with_delta(delta)
        key = _fmt(delta)
        for g in games:
            gts = ground_truth[g].captions
            row = {f"{m}@{key}": windowed_metric(predictions[g], gts, c, m, scorer) for m in METRICS}
            row[f"soda_c@{key}"] = soda_c_windowed(predictions[g], gts, c)
            per_game[g]["captioning"][key] = row
        names = list(per_game[games[0]]["captioning"][key]) if games else []
        captioning[key] = {n: float(np.mean([per_game[g]["captioning"][key][n] for g in games])) for n in names}

    first = _fmt(deltas[0]) if deltas else None
    soda = captioning.get(first, {}).get(f"soda_c@{first}", 0.0) if first else 0.0
    config = {
        "deltas": [float(d) for d in deltas],
        "tolerances": [float(t) for t in tolerances],
        **cfg.to_dict(),
        "n_games": len(games),
    }
    config.pop("delta_seconds")
    if cfg.window_halfwidth is None:
        config["window_halfwidth"] = "delta/2"
    return SdvcReport(config, spotting, captioning, soda, per_game)
