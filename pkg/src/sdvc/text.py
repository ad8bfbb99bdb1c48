"""Tokenization and vocabulary shared by the metrics and the captioning baseline."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
ENTITY_TOKENS = ("[TEAM]", "[COACH]", "[REFEREE]", "[PLAYER]")

_TOKEN_RE = re.compile(
    r"\[(?:TEAM|COACH|REFEREE|PLAYER|Player_[^\]\s]+)\]"  # entity tokens, kept verbatim
    r"|\w+"
    r"|[^\w\s]"
)
_ENTITY_RE = re.compile(r"\[(?:TEAM|COACH|REFEREE|PLAYER|Player_[^\]\s]+)\]")
_WORDLIKE_RE = re.compile(r"\w")


def tokenize(text: str) -> list[str]:
    """Lowercase and split ``text`` on whitespace and punctuation.

    Entity tokens such as ``[PLAYER]`` or ``[Player_p7]`` are emitted as a
    single token and keep their case. Each punctuation character becomes its
    own token.
    """
    out = []
    for m in _TOKEN_RE.finditer(text):
        tok = m.group(0)
        out.append(tok if _ENTITY_RE.fullmatch(tok) else tok.lower())
    return out


def is_entity_token(token: str) -> bool:
    return _ENTITY_RE.fullmatch(token) is not None


def is_word(token: str) -> bool:
    """True unless the token is pure punctuation."""
    return _WORDLIKE_RE.search(token) is not None


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        if tuple(self.tokens[: len(SPECIALS)]) != SPECIALS:
            raise ValueError(f"vocabulary must start with {SPECIALS}")
        missing = [t for t in ENTITY_TOKENS if t not in self.tokens]
        if missing:
            raise ValueError(f"vocabulary is missing entity tokens {missing}")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def bos_id(self) -> int:
        return self.index[BOS]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def specials(self) -> dict[str, int]:
        return {t: self.index[t] for t in SPECIALS}

    @property
    def entity_ids(self) -> dict[str, int]:
        return {t: self.index[t] for t in ENTITY_TOKENS}

    def encode(self, tokens: Iterable[str]) -> list[int]:
        unk = self.unk_id
        return [self.index.get(t, unk) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        """Map ids back to tokens, stopping at EOS and dropping PAD/BOS."""
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.tokens):
                raise ValueError(f"token id {i} outside vocabulary of size {len(self.tokens)}")
            if i == self.eos_id:
                break
            if i in (self.pad_id, self.bos_id):
                continue
            out.append(self.tokens[i])
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)

    def sha256(self) -> str:
        return hashlib.sha256(("\n".join(self.tokens) + "\n").encode("utf-8")).hexdigest()


def vocabulary_from_texts(texts: Iterable[str], min_count: int = 5) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(tokenize(text))
    reserved = set(SPECIALS) | set(ENTITY_TOKENS)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count and t not in reserved),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(list(SPECIALS) + list(ENTITY_TOKENS) + kept)


def build_vocabulary(docs: Sequence, min_count: int = 5, field: str = "anonymized") -> Vocabulary:
    """Vocabulary over one text version of every caption in ``docs``.

    Order is specials, entity tokens, then frequency descending with
    lexicographic tie-break.
    """
    if not docs:
        raise ValueError("build_vocabulary needs at least one document")
    return vocabulary_from_texts(
        (c.text(field) for d in docs for c in d.captions), min_count=min_count
    )
