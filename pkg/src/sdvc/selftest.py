"""Fast sanity checks with answers known by construction."""

from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .baseline.models import VladPool
from .corpus import GameClock, filter_corpus, load_features, write_features
from .metrics import ScoredPair, bleu, meteor_components, rouge_l
from .sdvc_eval import SdvcConfig, evaluate_sdvc
from .spotting import PredictionSet, SpotPrediction, average_precision, nms
from .text import tokenize
from .toy import make_toy_game

CHECKS: dict[str, Callable[[], bool]] = {}


def check(fn: Callable[[], bool]) -> Callable[[], bool]:
    CHECKS[fn.__name__] = fn
    return fn


@check
def clock_round_trip() -> bool:
    return GameClock.parse("2 - 45:07").format() == "2 - 45:07" and GameClock.parse("1 - 00:30").seconds == 30.0


@check
def tokenizer_keeps_entities() -> bool:
    return tokenize("[Player_a1] Scores!") == ["[Player_a1]", "scores", "!"]


@check
def identical_text_scores_one() -> bool:
    toks = "a long pass finds the striker".split()
    pairs = [ScoredPair(toks, [toks])]
    m = meteor_components(toks, toks)
    return bleu(pairs) == 1.0 and rouge_l(pairs) == 1.0 and abs(m["penalty"] - 0.5 / 6**3) < 1e-12


@check
def gt_as_predictions_ap_one() -> bool:
    gts = [GameClock(1, 10.0), GameClock(1, 300.0), GameClock(2, 42.0)]
    preds = [SpotPrediction(c, 0.9) for c in gts]
    return all(average_precision(preds, gts, d) == 1.0 for d in (5, 30, 60))


@check
def nms_of_nothing() -> bool:
    return nms([], 30.0) == []


@check
def vlad_output_unit_norm() -> bool:
    g = torch.Generator().manual_seed(0)
    pool = VladPool(8, 4, True, g)
    v = pool(torch.randn(3, 10, 8, generator=g))
    return bool(torch.allclose(v.norm(dim=1), torch.ones(3), atol=1e-5))


@check
def feature_file_round_trip() -> bool:
    data = np.random.default_rng(0).normal(size=(20, 512)).astype(np.float32)
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "half1.sncf"
        write_features(p, data)
        return bool(np.array_equal(load_features(p, fps=2.0).data, data))


@check
def empty_filter_is_identity() -> bool:
    doc = make_toy_game("g", {1: [60.0]}, {1: [0]}, half_seconds=120, dim=8).doc
    out, counts = filter_corpus([doc], set())
    return out[0].captions == doc.captions and counts == {}


@check
def sdvc_identity_report() -> bool:
    doc = make_toy_game("g", {1: [60.0, 200.0], 2: [30.0]}, {1: [0, 7], 2: [2]}, dim=8).doc
    preds = {"g": PredictionSet("g", [SpotPrediction(c.clock, 1.0, c.text_anonymized) for c in doc.captions])}
    r = evaluate_sdvc(preds, [doc], SdvcConfig())
    return all(v == 1.0 for v in r.spotting.values()) and r.captioning["30"]["bleu4@30"] == 1.0


def run() -> list[tuple[str, bool]]:
    out = []
    for name, fn in CHECKS.items():
        try:
            ok = bool(fn())
        except Exception:  # a crash is a failed check
            ok = False
        out.append((name, ok))
    return out
