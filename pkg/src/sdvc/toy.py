"""Synthetic games with planted feature signatures, for desk-scale checks.

Background frames are small Gaussian noise. At every comment anchor a
spotting signature is added to the anchor frame, and a per-caption
signature is spread over the surrounding frames, so a model can learn both
where comments are and which text goes with them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baseline.train import HalfVideo, anchor_frame
from .corpus import CaptionRecord, GameClock, GameDocument, Player, TeamSheet

TOY_CAPTIONS = (
    "[PLAYER] ( [TEAM] ) takes a corner kick .",
    "[PLAYER] ( [TEAM] ) is shown a yellow card by [REFEREE] .",
    "[PLAYER] ( [TEAM] ) scores with a powerful header !",
    "substitution for [TEAM] : [PLAYER] replaces [PLAYER] .",
    "[REFEREE] blows the whistle to start the game .",
    "[PLAYER] ( [TEAM] ) misses the target from long range .",
    "[PLAYER] ( [TEAM] ) is injured and needs treatment .",
    "the ball goes out for a throw-in .",
    "[PLAYER] ( [TEAM] ) wins a free kick in the middle of the pitch .",
    "[COACH] is unhappy with the decision .",
    "[PLAYER] ( [TEAM] ) sends a cross into the box but nobody reaches it .",
    "offside flag goes up against [PLAYER] ( [TEAM] ) .",
    "[PLAYER] ( [TEAM] ) saves the shot with a great dive !",
    "the first half is over .",
    "[PLAYER] ( [TEAM] ) commits a foul and [REFEREE] stops play .",
    "[TEAM] keep possession in their own half .",
    "[PLAYER] ( [TEAM] ) hits the post !",
    "penalty for [TEAM] after a foul on [PLAYER] .",
    "[PLAYER] ( [TEAM] ) receives a red card and must leave the pitch .",
    "the referee adds three minutes of stoppage time .",
)


def toy_team(name: str, prefix: str, coach: str = "") -> TeamSheet:
    players = [
        Player(uid=f"{prefix}{i}", name=f"Toyplayer {prefix.upper()}{i:02d}x", jersey=i, starter=i <= 11)
        for i in range(1, 15)
    ]
    return TeamSheet(name=name, coach=coach or f"Coachname {prefix.upper()}", tactic="4-4-2", players=players)


@dataclass
class ToyGame:
    doc: GameDocument
    halves: list[HalfVideo]
    caption_ids: dict[int, list[int]]  # half -> caption index per anchor

    def caption_texts(self) -> list[list[str]]:
        return [[TOY_CAPTIONS[i] for i in self.caption_ids[h.half]] for h in self.halves]


def signatures(n: int, dim: int, seed: int, scale: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(n, dim))
    return scale * s / np.linalg.norm(s, axis=1, keepdims=True)


def make_toy_game(
    game_id: str,
    anchors: dict[int, list[float]],
    caption_ids: dict[int, list[int]],
    half_seconds: float = 300.0,
    fps: float = 1.0,
    dim: int = 512,
    seed: int = 0,
    noise: float = 0.05,
    caption_spread: float = 6.0,
    signature_seed: int = 12345,
) -> ToyGame:
    rng = np.random.default_rng(seed)
    spot_sig = signatures(1, dim, signature_seed, scale=3.0)[0]
    cap_sig = signatures(len(TOY_CAPTIONS), dim, signature_seed + 1, scale=2.0)
    halves, captions = [], []
    for half in (1, 2):
        n = int(round(half_seconds * fps))
        feats = noise * rng.normal(size=(n, dim))
        for t, c in zip(anchors.get(half, []), caption_ids.get(half, [])):
            f = anchor_frame(t, fps)
            lo, hi = max(0, int((t - caption_spread) * fps)), min(n, int((t + caption_spread) * fps) + 1)
            feats[lo:hi] += cap_sig[c]
            feats[f] += spot_sig
            text = TOY_CAPTIONS[c]
            captions.append(CaptionRecord(GameClock(half, float(t)), text, text, text, True, "other"))
        halves.append(HalfVideo(feats.astype(np.float32), fps, list(anchors.get(half, [])), game_id, half))
    doc = GameDocument(
        game_id=game_id,
        teams=(toy_team("Toyhome", "h"), toy_team("Toyaway", "a")),
        referee="Refname Toy",
        captions=sorted(captions, key=lambda c: c.clock),
        home_team="Toyhome",
        away_team="Toyaway",
    )
    return ToyGame(doc, halves, {h: list(caption_ids.get(h, [])) for h in (1, 2)})


def make_toy_corpus(
    n_games: int = 4,
    anchors_per_half: int = 4,
    half_seconds: float = 300.0,
    fps: float = 1.0,
    dim: int = 512,
    seed: int = 0,
    min_gap: float = 45.0,
) -> list[ToyGame]:
    """Games whose anchors are at least ``min_gap`` seconds apart and away from the half edges."""
    rng = np.random.default_rng(seed)
    games = []
    for g in range(n_games):
        anchors, cids = {}, {}
        for half in (1, 2):
            ts: list[float] = []
            tries = 0
            while len(ts) < anchors_per_half:
                tries += 1
                if tries > 10_000:
                    raise ValueError("cannot place the anchors with that gap in that half length")
                if tries % 200 == 0:
                    ts = []  # painted into a corner, start over
                t = float(rng.integers(30, int(half_seconds) - 30))
                if all(abs(t - u) >= min_gap for u in ts):
                    ts.append(t)
            anchors[half] = sorted(ts)
            cids[half] = [int(rng.integers(len(TOY_CAPTIONS))) for _ in ts]
        games.append(
            make_toy_game(f"toy/game{g:02d}", anchors, cids, half_seconds, fps, dim, seed=seed * 1000 + g)
        )
    return games
