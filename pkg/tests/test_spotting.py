import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdvc.corpus import GameClock
from sdvc.spotting import (
    PredictionSet,
    SpotPrediction,
    average_precision,
    load_prediction_dir,
    map_at_deltas,
    nms,
    tolerance_radius,
    write_prediction_dir,
)


def spot(half, t, conf, caption=None):
    return SpotPrediction(GameClock(half, float(t)), conf, caption)


# ---------------------------------------------------------------------- NMS

def brute_nms(spots, window):
    """Keep a spot iff no kept spot of higher rank lies within the window."""
    ranked = sorted(spots, key=lambda s: (-s.confidence, s.clock))
    kept = []
    for i, s in enumerate(ranked):
        suppressed = any(
            k.clock.half == s.clock.half and abs(k.clock.seconds - s.clock.seconds) <= window for k in kept
        )
        if not suppressed:
            kept.append(s)
    return sorted(kept, key=lambda s: s.clock)


spots_st = st.lists(
    st.builds(spot, st.integers(1, 2), st.integers(0, 300), st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9, 1.0])),
    max_size=15,
)


def test_nms_examples():
    assert nms([], 30) == []
    out = nms([spot(1, 100, 0.9), spot(1, 110, 0.8), spot(1, 150, 0.7), spot(2, 105, 0.6)], 30)
    assert [(s.clock.half, s.clock.seconds) for s in out] == [(1, 100), (1, 150), (2, 105)]


def test_nms_tie_keeps_earlier():
    out = nms([spot(1, 20, 0.5), spot(1, 10, 0.5)], 30)
    assert [s.clock.seconds for s in out] == [10]


@given(spots_st, st.sampled_from([1.0, 5.0, 30.0]))
def test_nms_matches_brute_force(spots, window):
    assert nms(spots, window) == brute_nms(spots, window)


@given(spots_st, st.sampled_from([5.0, 30.0]))
def test_nms_properties(spots, window):
    out = nms(spots, window)
    assert nms(out, window) == out
    for a in out:
        for b in out:
            if a is not b and a.clock.half == b.clock.half:
                assert abs(a.clock.seconds - b.clock.seconds) > window
    if spots:
        assert max(s.confidence for s in out) == max(s.confidence for s in spots)


# ----------------------------------------------------------------------- AP

def test_radius_modes():
    assert tolerance_radius(30, "half") == 15 and tolerance_radius(30, "full") == 30
    with pytest.raises(ValueError):
        tolerance_radius(0)


def test_gt_as_predictions():
    gts = [GameClock(1, 10), GameClock(1, 400), GameClock(2, 30)]
    preds = [SpotPrediction(c, 1.0) for c in gts]
    for d in (5, 30, 60):
        assert average_precision(preds, gts, d) == 1.0


def test_empty_cases():
    assert average_precision([], [], 30) == 1.0
    assert average_precision([spot(1, 5, 0.5)], [], 30) == 0.0
    assert average_precision([], [GameClock(1, 5)], 30) == 0.0


def test_half_window_boundary():
    gts = [GameClock(1, 100)]
    assert average_precision([spot(1, 115, 0.9)], gts, 30) == 1.0
    assert average_precision([spot(1, 115.5, 0.9)], gts, 30) == 0.0
    assert average_precision([spot(1, 115.5, 0.9)], gts, 30, window="full") == 1.0


def test_other_half_never_matches():
    assert average_precision([spot(2, 100, 0.9)], [GameClock(1, 100)], 60) == 0.0


def test_hand_computed_ap():
    gts = [GameClock(1, 0), GameClock(1, 100)]
    preds = [spot(1, 0, 0.9), spot(1, 50, 0.8), spot(1, 100, 0.7)]
    # PR points (1, .5), (.5, .5), (2/3, 1): area .5*1 + .5*(2/3)
    assert average_precision(preds, gts, 10) == pytest.approx(0.5 + 1 / 3)
    assert average_precision(preds, gts, 10, interpolation="11-point") == pytest.approx((6 * 1 + 5 * (2 / 3)) / 11)


def oracle_ap(preds, gts, radius):
    """Sweep every confidence threshold; match each subset from scratch."""
    levels = sorted({p.confidence for p in preds}, reverse=True)
    points = []
    for tau in levels:
        subset = sorted([p for p in preds if p.confidence >= tau], key=lambda p: (-p.confidence, p.clock))
        used = set()
        tp = 0
        for p in subset:
            cands = [
                (abs(g.seconds - p.clock.seconds), g.half, g.seconds, k)
                for k, g in enumerate(gts)
                if k not in used and g.half == p.clock.half and abs(g.seconds - p.clock.seconds) <= radius
            ]
            if cands:
                used.add(min(cands)[3])
                tp += 1
        points.append((tp / len(gts), tp / len(subset)))
    area, prev_r = 0.0, 0.0
    for k, (r, _) in enumerate(points):
        best_p = max(p for _, p in points[k:])
        area += (r - prev_r) * best_p
        prev_r = r
    return area


fixture_st = st.tuples(
    st.lists(st.builds(GameClock, st.integers(1, 2), st.integers(0, 200).map(float)), min_size=1, max_size=8, unique=True),
    st.lists(
        st.builds(spot, st.integers(1, 2), st.integers(0, 200), st.sampled_from([0.2, 0.4, 0.6, 0.8, 0.95])), max_size=10
    ),
    st.sampled_from([5.0, 30.0, 60.0]),
)


@settings(max_examples=200, deadline=None)
@given(fixture_st)
def test_ap_matches_threshold_sweep(fx):
    gts, preds, delta = fx
    if not preds:
        return
    assert abs(average_precision(preds, gts, delta) - oracle_ap(preds, gts, delta / 2)) < 1e-9


@given(fixture_st)
def test_ap_in_unit_interval_and_time_shift_invariant(fx):
    gts, preds, delta = fx
    ap = average_precision(preds, gts, delta)
    assert 0.0 <= ap <= 1.0
    shift = lambda c: GameClock(c.half, c.seconds + 1000)  # noqa: E731
    moved = [SpotPrediction(shift(p.clock), p.confidence) for p in preds]
    assert average_precision(moved, [shift(g) for g in gts], delta) == pytest.approx(ap, abs=1e-12)


def test_map_macro_average():
    gt = {"a": [GameClock(1, 10)], "b": [GameClock(1, 10)]}
    preds = {"a": [spot(1, 10, 0.9)]}
    assert map_at_deltas(preds, gt, [30]) == {30.0: 0.5}
    with pytest.raises(KeyError):
        map_at_deltas({"zzz": []}, gt, [30])
    with pytest.raises(ValueError):
        map_at_deltas(preds, gt, [])


# -------------------------------------------------------------- file format

def test_prediction_dir_round_trip(tmp_path):
    sets = {
        "league/game 1": PredictionSet("league/game 1", [spot(2, 61, 0.25, "a cross"), spot(1, 5, 1.0)]),
        "g2": PredictionSet("g2", []),
    }
    write_prediction_dir(tmp_path, sets)
    back = load_prediction_dir(tmp_path)
    assert back == {k: PredictionSet(v.game_id, v.spots) for k, v in sets.items()}
    raw = json.loads((tmp_path / "league/game 1.json").read_text())
    assert raw["predictions"][0] == {"gameTime": "1 - 00:05", "confidence": 1.0}


def test_confidence_range():
    with pytest.raises(ValueError):
        spot(1, 0, 1.5)
