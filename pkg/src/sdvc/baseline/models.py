"""Aggregators (NetVLAD family), spotting head and LSTM captioning head."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig

_EPS = 1e-12


def _uniform_(t: torch.Tensor, bound: float, generator: torch.Generator) -> torch.Tensor:
    with torch.no_grad():
        return t.copy_(torch.rand(t.shape, generator=generator, dtype=t.dtype) * 2 * bound - bound)


def _l2(x: torch.Tensor, dim: int) -> torch.Tensor:
    return x / x.norm(dim=dim, keepdim=True).clamp_min(_EPS)


class VladPool(nn.Module):
    """Soft-assignment pooling over time.

    ``residual=True`` is NetVLAD (sum of a_k(x) (x - c_k)), ``False`` is
    NetRVLAD (sum of a_k(x) x, no centres). Output is (B, K*D), each cluster
    block L2-normalized, then the whole vector.
    """

    def __init__(self, dim: int, clusters: int, residual: bool, generator: torch.Generator):
        super().__init__()
        self.dim, self.clusters, self.residual = dim, clusters, residual
        bound = 1.0 / math.sqrt(dim)
        self.assign_weight = nn.Parameter(_uniform_(torch.empty(clusters, dim), bound, generator))
        self.assign_bias = nn.Parameter(_uniform_(torch.empty(clusters), bound, generator))
        if residual:
            self.centers = nn.Parameter(_uniform_(torch.empty(clusters, dim), bound, generator))
        else:
            self.register_parameter("centers", None)

    def pooled(self, x: torch.Tensor) -> torch.Tensor:
        a = torch.softmax(x @ self.assign_weight.T + self.assign_bias, dim=-1)  # B,T,K
        v = torch.einsum("btk,btd->bkd", a, x)
        if self.residual:
            v = v - a.sum(dim=1).unsqueeze(-1) * self.centers
        return _l2(v, dim=-1).flatten(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return _l2(self.pooled(x), dim=-1)


class Aggregator(nn.Module):
    def __init__(self, kind: str, dim: int, clusters: int, generator: torch.Generator):
        super().__init__()
        self.kind, self.dim, self.clusters = kind, dim, clusters
        residual = not kind.startswith("NetRVLAD")
        self.temporal = kind.endswith("++")
        if self.temporal:
            if clusters % 2:
                raise ValueError("++ pooling needs an even number of clusters")
            self.before = VladPool(dim, clusters // 2, residual, generator)
            self.after = VladPool(dim, clusters // 2, residual, generator)
        else:
            self.pool = VladPool(dim, clusters, residual, generator)

    @property
    def out_dim(self) -> int:
        return self.clusters * self.dim

    @property
    def min_frames(self) -> int:
        return 2 if self.temporal else 1

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 2:
            x = x.unsqueeze(0)
        if x.shape[1] < self.min_frames:
            raise ValueError(f"{self.kind} needs at least {self.min_frames} frames, got {x.shape[1]}")
        if x.shape[2] != self.dim:
            raise ValueError(f"expected feature dimension {self.dim}, got {x.shape[2]}")
        if not self.temporal:
            return self.pool(x)
        mid = x.shape[1] // 2
        return _l2(torch.cat([self.before.pooled(x[:, :mid]), self.after.pooled(x[:, mid:])], dim=-1), dim=-1)

    def pools(self) -> list[VladPool]:
        return [self.before, self.after] if self.temporal else [self.pool]

    @torch.no_grad()
    def seed_centers(self, sample: torch.Tensor, generator: torch.Generator) -> None:
        """k-means++ style seeding of the cluster centres from a feature sample (N, D)."""
        for pool in self.pools():
            k = pool.clusters
            if sample.shape[0] < k or not bool(torch.isfinite(sample).all()):
                return
            idx = [int(torch.randint(sample.shape[0], (1,), generator=generator))]
            d2 = ((sample - sample[idx[0]]) ** 2).sum(-1)
            for _ in range(1, k):
                if float(d2.sum()) <= 0:
                    break
                nxt = int(torch.multinomial(d2 / d2.sum(), 1, generator=generator))
                idx.append(nxt)
                d2 = torch.minimum(d2, ((sample - sample[nxt]) ** 2).sum(-1))
            if len(idx) < k:
                return
            c = sample[idx].to(pool.assign_weight.dtype)
            if pool.centers is not None:
                pool.centers.copy_(c)
            # assignment logits w.x + b = -|x - c|^2 / 2 up to a per-frame constant, scaled down
            scale = 1.0 / max(float(c.norm(dim=-1).mean()), 1.0)
            pool.assign_weight.copy_(c * scale)
            pool.assign_bias.copy_(-0.5 * (c * c).sum(-1) * scale)


def _linear(n_in: int, n_out: int, generator: torch.Generator) -> nn.Linear:
    layer = nn.Linear(n_in, n_out)
    bound = 1.0 / math.sqrt(n_in)
    _uniform_(layer.weight, bound, generator)
    _uniform_(layer.bias, bound, generator)
    return layer


class SpottingHead(nn.Module):
    """Dense layer with sigmoid; output 0 is foreground (comment), 1 background."""

    def __init__(self, in_dim: int, generator: torch.Generator):
        super().__init__()
        self.fc = _linear(in_dim, 2, generator)

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.fc(v))


class SpottingModel(nn.Module):
    def __init__(self, cfg: ModelConfig, generator: torch.Generator):
        super().__init__()
        self.cfg = cfg
        self.aggregator = Aggregator(cfg.pool, cfg.feature_dim, cfg.clusters, generator)
        self.head = SpottingHead(self.aggregator.out_dim, generator)

    def forward(self, clips: torch.Tensor) -> torch.Tensor:
        return self.head(self.aggregator(clips))

    def logits(self, clips: torch.Tensor) -> torch.Tensor:
        return self.head.fc(self.aggregator(clips))


class CaptioningHead(nn.Module):
    """FC -> ReLU -> dropout (twice) seeds layer 1 of an L-layer LSTM decoder."""

    def __init__(self, in_dim: int, vocab_size: int, cfg: ModelConfig, generator: torch.Generator):
        super().__init__()
        self.vocab_size, self.max_len = vocab_size, cfg.max_len
        self.fc1 = _linear(in_dim, cfg.hidden, generator)
        self.fc2 = _linear(cfg.hidden, cfg.hidden, generator)
        self.drop = nn.Dropout(cfg.dropout)
        self.embedding = nn.Embedding(vocab_size, cfg.embed, padding_idx=0)
        with torch.no_grad():
            self.embedding.weight.copy_(torch.randn(vocab_size, cfg.embed, generator=generator) * 0.1)
            self.embedding.weight[0].zero_()
        self.lstm = nn.LSTM(cfg.embed, cfg.hidden, num_layers=cfg.layers, batch_first=True)
        bound = 1.0 / math.sqrt(cfg.hidden)
        for p in self.lstm.parameters():
            _uniform_(p, bound, generator)
        self.out = _linear(cfg.hidden, vocab_size, generator)

    def initial_state(self, v: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h1 = self.drop(F.relu(self.fc2(self.drop(F.relu(self.fc1(v))))))
        layers = self.lstm.num_layers
        h = torch.zeros(layers, v.shape[0], self.lstm.hidden_size, dtype=v.dtype)
        h = torch.cat([h1.unsqueeze(0), h[1:]], dim=0)
        return h, torch.zeros_like(h)

    def check_ids(self, ids: torch.Tensor) -> None:
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.vocab_size):
            raise ValueError(f"token id outside vocabulary of size {self.vocab_size}")

    def teacher_forced_logits(self, v: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
        """Logits (B, S, V) when every step consumes the gold previous token."""
        self.check_ids(inputs)
        out, _ = self.lstm(self.embedding(inputs), self.initial_state(v))
        return self.out(out)

    def mixed_logits(
        self, v: torch.Tensor, inputs: torch.Tensor, ratio: float, generator: torch.Generator
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Step-wise decoding where step t > 0 reads the gold token with probability ``ratio``
        and the model's own argmax otherwise. Returns logits and the (B, S-1) mask of gold reads."""
        self.check_ids(inputs)
        state = self.initial_state(v)
        tok = inputs[:, :1]
        logits, used_gold = [], []
        for t in range(inputs.shape[1]):
            if t > 0:
                gold = torch.rand(inputs.shape[0], generator=generator) < ratio
                used_gold.append(gold)
                tok = torch.where(gold.unsqueeze(1), inputs[:, t : t + 1], logits[-1].argmax(-1).detach())
            out, state = self.lstm(self.embedding(tok), state)
            logits.append(self.out(out))
        mask = torch.stack(used_gold, dim=1) if used_gold else torch.zeros(inputs.shape[0], 0, dtype=torch.bool)
        return torch.cat(logits, dim=1), mask

    @torch.no_grad()
    def greedy(self, v: torch.Tensor, bos: int, eos: int, max_len: int | None = None) -> list[list[int]]:
        """Most likely next token at every step until EOS or ``max_len`` tokens."""
        max_len = self.max_len if max_len is None else max_len
        state = self.initial_state(v)
        tok = torch.full((v.shape[0], 1), bos, dtype=torch.long)
        done = torch.zeros(v.shape[0], dtype=torch.bool)
        seqs: list[list[int]] = [[] for _ in range(v.shape[0])]
        for _ in range(max_len):
            out, state = self.lstm(self.embedding(tok), state)
            tok = self.out(out).argmax(-1)
            for b in range(v.shape[0]):
                if not done[b]:
                    if int(tok[b, 0]) == eos:
                        done[b] = True
                    else:
                        seqs[b].append(int(tok[b, 0]))
            if bool(done.all()):
                break
        return seqs


class CaptioningModel(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab_size: int, generator: torch.Generator):
        super().__init__()
        self.cfg = cfg
        self.aggregator = Aggregator(cfg.pool, cfg.feature_dim, cfg.clusters, generator)
        self.head = CaptioningHead(self.aggregator.out_dim, vocab_size, cfg, generator)

    def forward(self, clips: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
        return self.head.teacher_forced_logits(self.aggregator(clips), inputs)

    def probabilities(self, clips: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self(clips, inputs), dim=-1)

    def greedy(self, clips: torch.Tensor, bos: int, eos: int, max_len: int | None = None) -> list[list[int]]:
        return self.head.greedy(self.aggregator(clips), bos, eos, max_len)
