"""BLEU-4, ROUGE-L, METEOR (exact + stem) and CIDEr-D over token lists.

Variants are fixed so that scores are reproducible without external
resources:

* BLEU: corpus level, closest reference length for the brevity penalty.
  Per-pair values replace a zero precision by ``1e-9 / max(guess, 1)``.
* ROUGE-L: LCS F-measure with beta = 1.2, max over references.
* METEOR: exact then Porter-stem unigram alignment, alpha = 0.9,
  gamma = 0.5, beta = 3, max over references. No synonym module.
* CIDEr-D: n = 1..4, sigma = 6, clipped tf-idf, x10.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .stemmer import STEMMER_VERSION, stem

Tokens = Sequence[str]

BLEU_SMOOTH = 1e-9
ROUGE_BETA = 1.2
METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA = 0.9, 3.0, 0.5
CIDER_N, CIDER_SIGMA = 4, 6.0

VARIANTS = {
    "bleu": "corpus, n=4, closest-ref brevity penalty, unsmoothed corpus / eps=1e-9 per pair, orders longer than the candidate skipped",
    "rouge_l": "LCS F-measure, beta=1.2, max over references, mean over pairs",
    "meteor": f"exact+stem ({STEMMER_VERSION}), alpha=0.9, beta=3, gamma=0.5, max over references",
    "cider": "CIDEr-D, n=1..4, sigma=6, clipped, x10",
}


@dataclass
class ScoredPair:
    candidate: list[str]
    references: list[list[str]]

    def __post_init__(self) -> None:
        if not self.references:
            raise ValueError("a scored pair needs at least one reference")
        self.candidate = list(self.candidate)
        self.references = [list(r) for r in self.references]


def _check(pairs: Sequence[ScoredPair]) -> None:
    if not pairs:
        raise ValueError("no pairs to score")


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------- BLEU

def _bleu_stats(pair: ScoredPair, max_n: int) -> tuple[list[int], list[int], int, int]:
    """Clipped matches and candidate n-gram totals per order, plus lengths."""
    cand = pair.candidate
    matches, totals = [], []
    for n in range(1, max_n + 1):
        c = ngrams(cand, n)
        max_ref: Counter = Counter()
        for r in pair.references:
            for g, k in ngrams(r, n).items():
                if k > max_ref[g]:
                    max_ref[g] = k
        matches.append(sum(min(k, max_ref[g]) for g, k in c.items()))
        totals.append(max(len(cand) - n + 1, 0))
    c_len = len(cand)
    r_len = min((abs(len(r) - c_len), len(r)) for r in pair.references)[1]
    return matches, totals, c_len, r_len


def _brevity(c_len: int, r_len: int) -> float:
    if c_len == 0:
        return 0.0
    return 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)


def bleu(pairs: Sequence[ScoredPair], max_n: int = 4) -> float:
    """Corpus BLEU: clipped counts summed over pairs, then geometric mean."""
    _check(pairs)
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    m_tot, t_tot = [0] * max_n, [0] * max_n
    c_sum = r_sum = 0
    for p in pairs:
        m, t, c, r = _bleu_stats(p, max_n)
        m_tot = [a + b for a, b in zip(m_tot, m)]
        t_tot = [a + b for a, b in zip(t_tot, t)]
        c_sum += c
        r_sum += r
    # an order with no candidate n-grams at all (0/0) is vacuous and left out
    if any(m == 0 for m, t in zip(m_tot, t_tot) if t > 0):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(m_tot, t_tot) if t > 0) / max_n
    return _brevity(c_sum, r_sum) * math.exp(log_p)


def bleu_pair(pair: ScoredPair, max_n: int = 4) -> float:
    m, t, c, r = _bleu_stats(pair, max_n)
    if c == 0:
        return 0.0
    log_p = 0.0
    for mi, ti in zip(m, t):
        if ti == 0:
            continue  # caption shorter than n
        p = mi / ti if mi > 0 else BLEU_SMOOTH / ti
        log_p += math.log(p)
    return _brevity(c, r) * math.exp(log_p / max_n)


# ------------------------------------------------------------------- ROUGE-L

def lcs_length(a: Tokens, b: Tokens) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_pair(pair: ScoredPair, beta: float = ROUGE_BETA) -> float:
    best = 0.0
    for ref in pair.references:
        lcs = lcs_length(pair.candidate, ref)
        if lcs == 0:
            continue
        p, r = lcs / len(pair.candidate), lcs / len(ref)
        f = (1 + beta**2) * p * r / (r + beta**2 * p)
        best = max(best, f)
    return best


def rouge_l(pairs: Sequence[ScoredPair], beta: float = ROUGE_BETA) -> float:
    _check(pairs)
    return sum(rouge_l_pair(p, beta) for p in pairs) / len(pairs)


# -------------------------------------------------------------------- METEOR

@dataclass
class Alignment:
    pairs: list[tuple[int, int]]  # (candidate index, reference index), sorted by candidate index

    @property
    def matches(self) -> int:
        return len(self.pairs)

    @property
    def chunks(self) -> int:
        if not self.pairs:
            return 0
        n = 1
        for (c0, r0), (c1, r1) in zip(self.pairs, self.pairs[1:]):
            if not (c1 == c0 + 1 and r1 == r0 + 1):
                n += 1
        return n


def align(candidate: Tokens, reference: Tokens) -> Alignment:
    """Unigram alignment in two stages, exact then stemmed.

    Within a stage candidate tokens are scanned left to right; each takes the
    free reference position that extends the previous match when possible,
    otherwise the leftmost free position with the same key.
    """
    used_c: dict[int, int] = {}
    used_r: set[int] = set()
    for key in (lambda t: t, stem):
        ckeys = [key(t) for t in candidate]
        rkeys = [key(t) for t in reference]
        positions: dict[str, list[int]] = {}
        for j, k in enumerate(rkeys):
            positions.setdefault(k, []).append(j)
        for i, k in enumerate(ckeys):
            if i in used_c:
                continue
            free = [j for j in positions.get(k, ()) if j not in used_r]
            if not free:
                continue
            prev = used_c.get(i - 1)
            j = prev + 1 if prev is not None and prev + 1 in free else free[0]
            used_c[i] = j
            used_r.add(j)
    return Alignment(sorted(used_c.items()))


def meteor_components(candidate: Tokens, reference: Tokens) -> dict:
    a = align(candidate, reference)
    m = a.matches
    if m == 0:
        return {"matches": 0, "chunks": 0, "precision": 0.0, "recall": 0.0, "fmean": 0.0, "penalty": 0.0, "score": 0.0}
    p, r = m / len(candidate), m / len(reference)
    fmean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (a.chunks / m) ** METEOR_BETA
    return {
        "matches": m,
        "chunks": a.chunks,
        "precision": p,
        "recall": r,
        "fmean": fmean,
        "penalty": penalty,
        "score": fmean * (1 - penalty),
    }


def meteor_pair(pair: ScoredPair) -> float:
    return max(meteor_components(pair.candidate, r)["score"] for r in pair.references)


def meteor(pairs: Sequence[ScoredPair]) -> float:
    _check(pairs)
    return sum(meteor_pair(p) for p in pairs) / len(pairs)


# --------------------------------------------------------------------- CIDEr

class CiderScorer:
    """CIDEr-D with document frequencies frozen from a reference corpus.

    Each element of ``corpus_refs`` is one document: the reference captions
    attached to one image or instant.
    """

    def __init__(self, corpus_refs: Iterable[Sequence[Tokens]], n: int = CIDER_N, sigma: float = CIDER_SIGMA):
        docs = [list(d) for d in corpus_refs]
        if not docs:
            raise ValueError("empty reference corpus")
        self.n, self.sigma = n, sigma
        self.df: Counter = Counter()
        for refs in docs:
            grams = set()
            for r in refs:
                for k in range(1, n + 1):
                    grams.update(ngrams(r, k))
            self.df.update(grams)
        self.log_n_docs = math.log(float(len(docs)))

    def _vec(self, tokens: Tokens) -> tuple[list[dict], list[float]]:
        vecs, norms = [], []
        for k in range(1, self.n + 1):
            v = {g: tf * (self.log_n_docs - math.log(max(1.0, self.df[g]))) for g, tf in ngrams(tokens, k).items()}
            vecs.append(v)
            norms.append(math.sqrt(sum(x * x for x in v.values())))
        return vecs, norms

    def score_pair(self, pair: ScoredPair) -> float:
        vc, nc = self._vec(pair.candidate)
        total = 0.0
        for ref in pair.references:
            vr, nr = self._vec(ref)
            delta = len(pair.candidate) - len(ref)
            gauss = math.exp(-(delta**2) / (2 * self.sigma**2))
            for k in range(self.n):
                val = sum(min(x, vr[k].get(g, 0.0)) * vr[k].get(g, 0.0) for g, x in vc[k].items())
                if nc[k] != 0 and nr[k] != 0:
                    val /= nc[k] * nr[k]
                total += val * gauss
        return 10.0 * total / self.n / len(pair.references)


def cider(pairs: Sequence[ScoredPair], corpus_refs: Iterable[Sequence[Tokens]] | None = None) -> float:
    """Mean CIDEr-D over ``pairs``; ``corpus_refs`` defaults to the pairs' own references."""
    _check(pairs)
    scorer = CiderScorer(corpus_refs if corpus_refs is not None else [p.references for p in pairs])
    return sum(scorer.score_pair(p) for p in pairs) / len(pairs)


# -------------------------------------------------------------------- report

METRICS = ("bleu4", "meteor", "rouge_l", "cider")


@dataclass
class MetricReport:
    bleu4: float
    meteor: float
    rouge_l: float
    cider: float
    per_pair: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": {"variants": dict(VARIANTS)},
            "corpus": {k: round(getattr(self, k), 6) for k in METRICS},
            "per_pair": [{k: round(v, 6) for k, v in row.items()} for row in self.per_pair],
        }


def score_pair(pair: ScoredPair, metric: str, cider_scorer: CiderScorer | None = None) -> float:
    if metric == "bleu4":
        return bleu_pair(pair)
    if metric == "meteor":
        return meteor_pair(pair)
    if metric == "rouge_l":
        return rouge_l_pair(pair)
    if metric == "cider":
        if cider_scorer is None:
            raise ValueError("cider needs a scorer with corpus document frequencies")
        return cider_scorer.score_pair(pair)
    raise ValueError(f"unknown metric {metric!r}")


def evaluate_pairs(pairs: Sequence[ScoredPair], corpus_refs=None) -> MetricReport:
    _check(pairs)
    scorer = CiderScorer(corpus_refs if corpus_refs is not None else [p.references for p in pairs])
    per_pair = [
        {
            "bleu4": bleu_pair(p),
            "meteor": meteor_pair(p),
            "rouge_l": rouge_l_pair(p),
            "cider": scorer.score_pair(p),
        }
        for p in pairs
    ]
    return MetricReport(
        bleu4=bleu(pairs),
        meteor=sum(r["meteor"] for r in per_pair) / len(pairs),
        rouge_l=sum(r["rouge_l"] for r in per_pair) / len(pairs),
        cider=sum(r["cider"] for r in per_pair) / len(pairs),
        per_pair=per_pair,
    )
