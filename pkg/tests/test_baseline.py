import json
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from sdvc.baseline import (
    POOLING_KINDS,
    REGIMES,
    Aggregator,
    CaptioningModel,
    HalfVideo,
    ModelConfig,
    SpottingModel,
    TrainConfig,
    TrainingDiverged,
    aggregator_bytes,
    caption_samples,
    caption_train,
    sdvc_infer,
    spotting_infer,
    spotting_train,
    transfer_weights,
)
from sdvc.baseline.checkpoint import load_into, load_meta, load_tensors, save_model
from sdvc.baseline.gradcheck import finite_difference_errors
from sdvc.baseline.train import (
    anchor_frame,
    caption_clip,
    caption_cross_entropy,
    caption_loss,
    pack_tokens,
    sample_spotting_chunks,
    spotting_loss,
)
from sdvc.text import tokenize, vocabulary_from_texts
from sdvc.toy import TOY_CAPTIONS, make_toy_corpus, make_toy_game

TINY = dict(feature_dim=4, clusters=2, hidden=8, embed=6, layers=2)


def gen(seed=0):
    return torch.Generator().manual_seed(seed)


# --------------------------------------------------------------- aggregators

def scalar_pool(x, W, b, C, residual):
    """Straight-line loops over frames, clusters and dimensions."""
    T, D = len(x), len(x[0])
    K = len(b)
    a = []
    for t in range(T):
        logits = [sum(W[k][d] * x[t][d] for d in range(D)) + b[k] for k in range(K)]
        m = max(logits)
        e = [math.exp(z - m) for z in logits]
        s = sum(e)
        a.append([v / s for v in e])
    out = []
    for k in range(K):
        v = [sum(a[t][k] * (x[t][d] - (C[k][d] if residual else 0.0)) for t in range(T)) for d in range(D)]
        n = math.sqrt(sum(z * z for z in v)) or 1.0
        out.extend(z / n for z in v)
    return out


def unit(v):
    n = math.sqrt(sum(z * z for z in v))
    return [z / n for z in v]


@pytest.mark.parametrize("kind", POOLING_KINDS)
def test_aggregator_scalar_oracle(kind):
    torch.set_default_dtype(torch.float64)
    try:
        agg = Aggregator(kind, 3, 2, gen(1))
        x = torch.randn(1, 4, 3, generator=gen(2))
        got = agg(x)[0].tolist()
        xs = x[0].tolist()

        def params(p):
            C = p.centers.tolist() if p.centers is not None else None
            return p.assign_weight.tolist(), p.assign_bias.tolist(), C, p.residual

        if kind.endswith("++"):
            want = unit(scalar_pool(xs[:2], *params(agg.before)) + scalar_pool(xs[2:], *params(agg.after)))
        else:
            want = unit(scalar_pool(xs, *params(agg.pool)))
        assert got == pytest.approx(want, abs=1e-12)
    finally:
        torch.set_default_dtype(torch.float32)


def test_single_cluster_rvlad_is_normalized_sum():
    agg = Aggregator("NetRVLAD", 5, 1, gen())
    x = torch.randn(2, 7, 5, generator=gen(3))
    s = x.sum(1)
    assert torch.allclose(agg(x), s / s.norm(dim=1, keepdim=True), atol=1e-6)


@pytest.mark.parametrize("kind", POOLING_KINDS)
def test_repeated_frame_independent_of_length(kind):
    agg = Aggregator(kind, 6, 4, gen())
    frame = torch.randn(6, generator=gen(4))
    outs = [agg(frame.repeat(T, 1).unsqueeze(0)) for T in (2, 4, 10)]
    for o in outs[1:]:
        assert torch.allclose(o, outs[0], atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(POOLING_KINDS), st.integers(2, 9), st.integers(0, 10_000))
def test_unit_norm_and_permutation_invariance(kind, T, seed):
    agg = Aggregator(kind, 5, 4, gen(seed))
    x = torch.randn(1, T, 5, generator=gen(seed + 1)) * 3
    out = agg(x)
    assert out.shape == (1, 20)
    assert float(out.detach().norm()) == pytest.approx(1.0, abs=1e-5)
    mid = T // 2 if kind.endswith("++") else T
    perm = torch.cat([torch.randperm(mid, generator=gen(seed)), mid + torch.randperm(T - mid, generator=gen(seed))])
    assert torch.allclose(agg(x[:, perm]), out, atol=1e-5)


def test_minimum_frames():
    with pytest.raises(ValueError):
        Aggregator("NetVLAD++", 4, 2, gen())(torch.randn(1, 1, 4))
    with pytest.raises(ValueError):
        Aggregator("NetVLAD", 4, 2, gen())(torch.randn(1, 0, 4))
    with pytest.raises(ValueError):
        ModelConfig(pool="NetRVLAD++", clusters=3)


# ------------------------------------------------------------- spotting head

def test_spotting_zero_params_half():
    m = SpottingModel(ModelConfig(**TINY), gen())
    with torch.no_grad():
        m.head.fc.weight.zero_()
        m.head.fc.bias.zero_()
    assert torch.equal(m(torch.randn(3, 5, 4)), torch.full((3, 2), 0.5))


def test_spotting_scalar_oracle():
    m = SpottingModel(ModelConfig(feature_dim=3, clusters=2, pool="NetRVLAD"), gen(5))
    x = torch.randn(1, 4, 3, generator=gen(6))
    v = m.aggregator(x)[0].tolist()
    W, b = m.head.fc.weight.tolist(), m.head.fc.bias.tolist()
    want = [1 / (1 + math.exp(-(sum(w * z for w, z in zip(W[c], v)) + b[c]))) for c in range(2)]
    got = m(x)[0].tolist()
    assert got == pytest.approx(want, abs=1e-6)
    assert all(0 < p < 1 for p in got)


# ---------------------------------------------------------- gradient checks

def _double_models(kind):
    torch.set_default_dtype(torch.float64)
    cfg = ModelConfig(pool=kind, dropout=0.4, **TINY)
    return cfg, SpottingModel(cfg, gen(0)).double().eval(), CaptioningModel(cfg, 12, gen(1)).double().eval()


@pytest.mark.parametrize("kind", POOLING_KINDS)
def test_gradients_finite_difference(kind):
    try:
        cfg, spot, cap = _double_models(kind)
        x = torch.randn(3, 6, 4, generator=gen(2))
        y = torch.tensor([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        errs = finite_difference_errors(lambda: spotting_loss(spot, x, y), spot.named_parameters())
        assert max(errs.values()) < 1e-4, errs
        inp = torch.tensor([[1, 5, 6, 7, 8], [1, 9, 10, 0, 0]])
        tgt = torch.tensor([[5, 6, 7, 8, 2], [9, 10, 2, 0, 0]])
        x2 = torch.randn(2, 6, 4, generator=gen(3))
        errs = finite_difference_errors(lambda: caption_loss(cap, x2, inp, tgt, 0), cap.named_parameters())
        names = {n.split(".")[1] for n in errs if n.startswith("head.")}
        assert {"fc1", "fc2", "embedding", "lstm", "out"} <= names
        assert any(n.startswith("head.lstm.") and n.endswith("_l1") for n in errs)
        assert max(errs.values()) < 1e-4, errs
    finally:
        torch.set_default_dtype(torch.float32)


# ------------------------------------------------------------ caption head

def test_probabilities_sum_to_one():
    m = CaptioningModel(ModelConfig(**TINY), 12, gen()).eval()
    inp = torch.tensor([[1, 5, 6], [1, 7, 0]])
    p = m.probabilities(torch.randn(2, 5, 4), inp)
    assert torch.allclose(p.sum(-1), torch.ones(2, 3), atol=1e-6)


def test_out_of_vocabulary_id():
    m = CaptioningModel(ModelConfig(**TINY), 12, gen())
    with pytest.raises(ValueError):
        m(torch.randn(1, 5, 4), torch.tensor([[1, 12]]))


def test_greedy_length_cap():
    m = CaptioningModel(ModelConfig(**TINY), 12, gen()).eval()
    with torch.no_grad():
        m.head.out.bias[2] = -1e9  # EOS never wins
    assert len(m.greedy(torch.randn(1, 5, 4), 1, 2)[0]) == 60


def test_initial_state_layer_one_only():
    m = CaptioningModel(ModelConfig(**TINY), 12, gen()).eval()
    h, c = m.head.initial_state(m.aggregator(torch.randn(2, 5, 4)))
    assert h.shape == (2, 2, 8)
    assert torch.count_nonzero(h[1]) == 0 and torch.count_nonzero(c) == 0


def test_eval_mode_deterministic():
    m = CaptioningModel(ModelConfig(**TINY), 12, gen()).eval()
    x, inp = torch.randn(2, 5, 4), torch.tensor([[1, 5, 6], [1, 7, 3]])
    assert torch.equal(m(x, inp), m(x, inp))


def test_teacher_forcing_rate():
    m = CaptioningModel(ModelConfig(**TINY), 12, gen())
    inp = torch.randint(3, 12, (64, 11), generator=gen(7))
    inp[:, 0] = 1
    rates = []
    for seed in range(5):
        _, mask = m.head.mixed_logits(m.aggregator(torch.randn(64, 5, 4)), inp, 0.5, gen(seed))
        rates.append(float(mask.double().mean()))
    assert abs(np.mean(rates) - 0.5) < 0.05
    _, mask = m.head.mixed_logits(m.aggregator(torch.randn(4, 5, 4)), inp[:4], 1.0, gen())
    assert bool(mask.all())


def test_teacher_forcing_one_equals_forced_logits():
    m = CaptioningModel(ModelConfig(**TINY), 12, gen()).eval()
    v = m.aggregator(torch.randn(2, 5, 4))
    inp = torch.tensor([[1, 5, 6, 7], [1, 8, 9, 0]])
    mixed, _ = m.head.mixed_logits(v, inp, 1.0, gen())
    assert torch.allclose(mixed, m.head.teacher_forced_logits(v, inp), atol=1e-6)


def test_pack_tokens():
    vocab = vocabulary_from_texts(["a b c"], min_count=1)
    inp, tgt = pack_tokens([vocab.encode(["a", "b"]), vocab.encode(["c"])], vocab)
    assert inp.tolist() == [[1, 8, 9], [1, 10, 0]]
    assert tgt.tolist() == [[8, 9, 2], [10, 2, 0]]


# ---------------------------------------------------------------- training

def small_corpus(dim=16, n_games=3, seed=0):
    return make_toy_corpus(n_games=n_games, anchors_per_half=3, half_seconds=240, dim=dim, seed=seed)


def test_chunk_labels():
    games = small_corpus()
    halves = [h for g in games for h in g.halves]
    clips, targets = sample_spotting_chunks(halves, 5.0, np.random.default_rng(0))
    assert len(clips) == 2 * sum(len(h.anchors) for h in halves)
    assert (targets[:, 0] + targets[:, 1] == 1).all() and targets[:, 0].sum() == len(clips) / 2


def test_chunk_foreground_contains_anchor():
    h = HalfVideo(np.arange(100, dtype=np.float32)[:, None].repeat(3, 1), 1.0, [50.5], "g", 1)
    clips, targets = sample_spotting_chunks([h], 10.0, np.random.default_rng(1))
    for c, t in zip(clips, targets):
        inside = c[0, 0] <= anchor_frame(50.5, 1.0) <= c[-1, 0]
        assert inside == bool(t[0])


def test_zero_lr_keeps_parameters_and_loss():
    games = small_corpus()
    train, valid = [h for g in games[:2] for h in g.halves], games[2].halves
    cfg = TrainConfig(lr_init=0.0, max_epochs=2, chunk_seconds=5, seed=3)
    mcfg = ModelConfig(feature_dim=16, clusters=4)
    model = SpottingModel(mcfg, gen(9))
    before = {k: v.clone() for k, v in model.state_dict().items()}
    vc, vt = sample_spotting_chunks(valid, cfg.chunk_seconds, np.random.default_rng(cfg.seed + 1))
    with torch.no_grad():
        initial = float(spotting_loss(model, torch.from_numpy(vc), torch.from_numpy(vt)))
    model, log = spotting_train(train, cfg, mcfg, valid, model=model)
    assert all(torch.equal(before[k], v) for k, v in model.state_dict().items())
    assert log.losses("valid")[0] == pytest.approx(initial, rel=1e-6)


def test_divergence_reports_epoch():
    h = HalfVideo(np.full((60, 16), np.nan, dtype=np.float32), 1.0, [20.0], "g", 1)
    with pytest.raises(TrainingDiverged) as e:
        spotting_train([h], TrainConfig(chunk_seconds=5, max_epochs=3), ModelConfig(feature_dim=16, clusters=2))
    assert e.value.epoch == 1


def test_training_bit_reproducible():
    halves = [h for g in small_corpus() for h in g.halves]
    cfg = TrainConfig(chunk_seconds=5, max_epochs=3, seed=11)
    mcfg = ModelConfig(feature_dim=16, clusters=4, pool="NetVLAD++")
    a, la = spotting_train(halves, cfg, mcfg)
    b, lb = spotting_train(halves, cfg, mcfg)
    assert aggregator_bytes(a) == aggregator_bytes(b) and la.rows == lb.rows
    assert all(torch.equal(x, y) for x, y in zip(a.state_dict().values(), b.state_dict().values()))


@pytest.fixture(scope="module")
def trained_spotter():
    games = make_toy_corpus(n_games=4, anchors_per_half=4, half_seconds=300, dim=32, seed=0)
    halves = [h for g in games[:3] for h in g.halves]
    cfg = TrainConfig(chunk_seconds=5, max_epochs=200, batch_size=16, seed=0, target_loss=0.01)
    model, _ = spotting_train(halves, cfg, ModelConfig(feature_dim=32, clusters=8), games[3].halves)
    return model, cfg


def separable_halves(n, seed, dim=32):
    """Anchor frames carry a constant offset on top of faint noise."""
    rng = np.random.default_rng(seed)
    offset = np.zeros(dim, dtype=np.float32)
    offset[0] = 3.0
    out = []
    for i in range(n):
        x = rng.normal(scale=0.1, size=(300, dim)).astype(np.float32)
        anchors = [float(t) for t in range(15, 300, 30)]
        for t in anchors:
            x[int(t)] += offset
        out.append(HalfVideo(x, 1.0, anchors, f"g{i}", 1))
    return out


def test_separable_validation_bce():
    cfg = TrainConfig(chunk_seconds=5, max_epochs=200, batch_size=16, lr_init=1e-2, seed=0)
    _, log = spotting_train(separable_halves(4, 0), cfg, ModelConfig(feature_dim=32, clusters=4), separable_halves(2, 1))
    assert min(log.losses("valid")) < 0.05


def test_delta_signal_single_spot(trained_spotter):
    model, cfg = trained_spotter
    g = make_toy_game("probe", {1: [300.0]}, {1: [3]}, half_seconds=600, dim=32, seed=77)
    spots = [s for s in spotting_infer(g.halves[0], model, cfg) if s.confidence > 0.5]
    assert len(spots) == 1
    assert abs(spots[0].clock.seconds - 300.0) <= cfg.chunk_seconds / 2 + 1


def test_infer_short_half_and_nms_gaps(trained_spotter):
    model, cfg = trained_spotter
    short = HalfVideo(np.zeros((3, 32), dtype=np.float32), 1.0, [], "g", 1)
    assert spotting_infer(short, model, cfg) == []
    g = make_toy_game("probe", {1: [60.0, 75.0, 200.0]}, {1: [0, 1, 2]}, half_seconds=300, dim=32, seed=78)
    spots = spotting_infer(g.halves[0], model, cfg)
    gaps = np.diff([s.clock.seconds for s in spots])
    assert (gaps > cfg.nms_seconds).all()


def test_caption_clip_clamped():
    h = HalfVideo(np.arange(100, dtype=np.float32)[:, None], 1.0, [], "g", 1)
    assert caption_clip(h, 2.0, 45)[0, 0] == 0 and len(caption_clip(h, 2.0, 45)) == 45
    assert caption_clip(h, 99.0, 45)[-1, 0] == 99
    assert caption_clip(h, 50.0, 10)[0, 0] == 45


def test_single_caption_overfit():
    vocab = vocabulary_from_texts([TOY_CAPTIONS[2]], min_count=1)
    g = make_toy_game("one", {1: [60.0]}, {1: [2]}, half_seconds=120, dim=16)
    samples = caption_samples(g.halves[:1], [[TOY_CAPTIONS[2]]], vocab, 20)
    cfg = TrainConfig(max_epochs=300, lr_init=3e-3, target_loss=0.01, plateau_patience=50, seed=0)
    model, _ = caption_train(samples, vocab, cfg, ModelConfig(feature_dim=16, clusters=2, hidden=32, embed=16, layers=1))
    ids = model.greedy(torch.from_numpy(samples[0].clip).unsqueeze(0), vocab.bos_id, vocab.eos_id)[0]
    assert vocab.decode(ids) == tokenize(TOY_CAPTIONS[2])


# ---------------------------------------------------------------- transfer

def test_regimes_cover_table():
    assert set(REGIMES) == {"scratch", "spot->capt frozen", "spot->capt fine-tuned", "capt->spot frozen", "capt->spot fine-tuned"}


def test_transfer_modes():
    mcfg = ModelConfig(feature_dim=16, clusters=4)
    halves = [h for g in small_corpus() for h in g.halves]
    src, _ = spotting_train(halves, TrainConfig(chunk_seconds=5, max_epochs=2), mcfg)
    vocab = vocabulary_from_texts(TOY_CAPTIONS, min_count=1)
    frozen = transfer_weights(src, "caption", "frozen", mcfg, seed=1, vocab_size=len(vocab))
    assert aggregator_bytes(frozen) == aggregator_bytes(src)
    assert not any(p.requires_grad for p in frozen.aggregator.parameters())
    tuned = transfer_weights(src, "caption", "fine-tuned", mcfg, seed=1, vocab_size=len(vocab))
    assert all(p.requires_grad for p in tuned.aggregator.parameters())
    scratch = transfer_weights(None, "caption", "scratch", mcfg, seed=1, vocab_size=len(vocab))
    assert aggregator_bytes(scratch) != aggregator_bytes(src)

    game = small_corpus()[0]
    samples = caption_samples(game.halves, game.caption_texts(), vocab, 20)
    cfg = TrainConfig(max_epochs=3, seed=0)
    before = aggregator_bytes(frozen)
    caption_train(samples, vocab, cfg, mcfg, model=frozen)
    assert aggregator_bytes(frozen) == before
    caption_train(samples, vocab, cfg, mcfg, model=tuned)
    assert aggregator_bytes(tuned) != before
    # scratch and transferred initializations start from different losses
    assert caption_cross_entropy(scratch, samples, vocab) != caption_cross_entropy(
        transfer_weights(src, "caption", "fine-tuned", mcfg, seed=1, vocab_size=len(vocab)), samples, vocab
    )


def test_transfer_shape_mismatch():
    src = SpottingModel(ModelConfig(feature_dim=16, clusters=4), gen())
    with pytest.raises(ValueError, match="shapes differ"):
        transfer_weights(src, "caption", "frozen", ModelConfig(feature_dim=16, clusters=2), 0, vocab_size=12)


# -------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig(**TINY)
    m = CaptioningModel(cfg, 12, gen(1))
    save_model(tmp_path / "c.ckpt", m, {"model_config": cfg.to_dict(), "vocab_sha256": "x"})
    raw = (tmp_path / "c.ckpt").read_bytes()
    assert raw[:8] == b"SDVCCKPT"
    fresh = load_into(tmp_path / "c.ckpt", CaptioningModel(cfg, 12, gen(2)))
    assert all(torch.equal(a, b) for a, b in zip(m.state_dict().values(), fresh.state_dict().values()))
    assert load_meta(tmp_path / "c.ckpt")["vocab_sha256"] == "x"
    assert set(load_tensors(tmp_path / "c.ckpt")) == set(m.state_dict())
    assert json.loads((tmp_path / "c.ckpt.json").read_text())["model_config"]["layers"] == 2


# --------------------------------------------------------------- inference

def test_sdvc_infer_no_proposals(trained_spotter):
    model, cfg = trained_spotter
    vocab = vocabulary_from_texts(TOY_CAPTIONS, min_count=1)
    cap = CaptioningModel(ModelConfig(feature_dim=32, clusters=8, hidden=16, embed=8, layers=1), len(vocab), gen())
    quiet = HalfVideo(np.zeros((100, 32), dtype=np.float32), 1.0, [], "g", 1)
    strict = TrainConfig.from_dict({**cfg.to_dict(), "min_confidence": 1.0})
    out = sdvc_infer([quiet], model, cap, vocab, strict, "g")
    assert out.game_id == "g" and out.spots == []
