"""Entity anonymization of commentary text.

Names come from the game metadata (teams, coaches, referee, players). Text
is searched for them in three passes: literal overrides from a sidecar file,
an exact tier (case and diacritic folded, word bounded), and a fuzzy tier on
normalized edit distance. Fuzzy and ambiguous replacements are reported back
for review.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .corpus import GameDocument

KINDS = ("TEAM", "COACH", "REFEREE", "PLAYER")
GENERIC = {"TEAM": "[TEAM]", "COACH": "[COACH]", "REFEREE": "[REFEREE]", "PLAYER": "[PLAYER]"}
# precedence when a span is claimed by entities of different kinds and context cannot decide
_KIND_PRIORITY = {"PLAYER": 0, "COACH": 1, "REFEREE": 2, "TEAM": 3}
FUZZY_THRESHOLD = 0.85
_MIN_FUZZY_CHARS = 4
_PARTICLES = {
    "de", "da", "di", "do", "dos", "das", "del", "della", "van", "von",
    "der", "den", "le", "la", "el", "ter", "ten", "mac", "mc", "al", "ben",
}
_ENTITY_TOKEN_RE = re.compile(r"\[(?:TEAM|COACH|REFEREE|PLAYER|Player_[^\]\s]+)\]")
_SENTENCE_END_RE = re.compile(r"[.!?;]")


def fold(text: str) -> str:
    """Case fold and strip combining marks (``"Sánchez" -> "sanchez"``)."""
    decomposed = unicodedata.normalize("NFKD", text.casefold())
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def fuzzy_match(candidate: str, surface: str) -> float:
    """Similarity in [0, 1]: one minus the edit distance of the folded strings
    divided by the longer folded length."""
    a, b = fold(candidate), fold(surface)
    if not a and not b:
        return 1.0
    return 1.0 - edit_distance(a, b) / max(len(a), len(b))


@dataclass(frozen=True)
class Entity:
    kind: str
    surface_forms: tuple[str, ...]
    uid: str | None = None
    team: str | None = None  # own team for players, coaches and teams

    @property
    def key(self) -> tuple:
        return (_KIND_PRIORITY[self.kind], self.uid or "", self.surface_forms[0])


@dataclass
class EntityIndex:
    entries: list[Entity]
    overrides: dict[str, tuple[str, str | None]] = field(default_factory=dict)
    ambiguous: dict[str, list[Entity]] = field(default_factory=dict)  # folded surface -> claimants

    def entities_for(self, folded_surface: str) -> list[Entity]:
        return self._by_surface.get(folded_surface, [])

    def __post_init__(self) -> None:
        by_surface: dict[str, list[Entity]] = {}
        for e in sorted(self.entries, key=lambda e: e.key):
            for s in e.surface_forms:
                claimants = by_surface.setdefault(fold(s), [])
                if e not in claimants:
                    claimants.append(e)
        self._by_surface = by_surface
        self.ambiguous = {s: es for s, es in by_surface.items() if len(es) > 1}
        # longest first so alternation prefers the longer surface
        forms = sorted(by_surface, key=lambda s: (-len(s), s))
        self._exact_re = (
            re.compile(r"(?<!\w)(?:" + "|".join(re.escape(s) for s in forms) + r")(?!\w)") if forms else None
        )

    @property
    def surfaces(self) -> list[str]:
        return list(self._by_surface)


def _surface_forms(name: str, surnames: bool = True) -> tuple[str, ...]:
    name = " ".join(name.split())
    if not name:
        return ()
    parts = name.split(" ")
    forms = [name]
    if surnames and len(parts) > 1:
        # surname with any particles that precede it ("Kevin De Bruyne" -> "De Bruyne", "Bruyne")
        start = len(parts) - 1
        while start > 1 and parts[start - 1].lower() in _PARTICLES:
            start -= 1
        for i in range(start, len(parts)):
            form = " ".join(parts[i:])
            if len(fold(form)) >= 2:
                forms.append(form)
    seen: dict[str, str] = {}
    for f in forms:
        seen.setdefault(fold(f), f)
    return tuple(sorted(seen.values(), key=lambda s: (-len(s), s)))


def load_overrides(path: str | Path | None) -> dict[str, tuple[str, str | None]]:
    """Read a sidecar JSON mapping a literal span to ``{"kind": ..., "uid": ...}``."""
    if path is None:
        return {}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for span, spec in raw.items():
        kind = str(spec["kind"]).upper()
        if kind not in KINDS:
            raise ValueError(f"override {span!r}: unknown kind {kind!r}")
        uid = spec.get("uid")
        if kind == "PLAYER" and not uid:
            raise ValueError(f"override {span!r}: PLAYER needs a uid")
        out[span] = (kind, uid)
    return out


def build_entity_index(doc: "GameDocument", overrides: dict | str | Path | None = None) -> EntityIndex:
    entries: list[Entity] = []
    team_names = {t.name for t in doc.teams if t.name} | {n for n in (doc.home_team, doc.away_team) if n}
    for name in sorted(team_names):
        entries.append(Entity("TEAM", _surface_forms(name, surnames=False), team=name))
    if doc.referee.strip():
        entries.append(Entity("REFEREE", _surface_forms(doc.referee)))
    for team in doc.teams:
        if team.coach.strip():
            entries.append(Entity("COACH", _surface_forms(team.coach), team=team.name))
        for p in team.players:
            forms = _surface_forms(p.name)
            if forms:
                entries.append(Entity("PLAYER", forms, uid=p.uid, team=team.name))
    if not isinstance(overrides, dict):
        overrides = load_overrides(overrides)
    return EntityIndex(entries=entries, overrides=dict(overrides))


# ------------------------------------------------------------------- matching

def _folded_with_map(text: str) -> tuple[str, list[int]]:
    """Folded text plus, for each folded char, the index of its source char."""
    chars, origin = [], []
    for i, ch in enumerate(text):
        f = fold(ch)
        chars.append(f)
        origin.extend([i] * len(f))
    return "".join(chars), origin


def _protected_spans(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _ENTITY_TOKEN_RE.finditer(text)]


def _overlaps(span: tuple[int, int], taken: list[tuple[int, int]]) -> bool:
    return any(span[0] < e and s < span[1] for s, e in taken)


@dataclass
class _Match:
    start: int
    end: int
    tier: str  # override | exact | fuzzy
    claimants: list[Entity]
    score: float = 1.0


@dataclass(frozen=True)
class UnresolvedSpan:
    text: str
    start: int
    end: int
    reason: str
    candidates: tuple[str, ...] = ()


@dataclass
class AnonymizedText:
    identified: str
    anonymized: str
    unresolved: list[UnresolvedSpan]


def _exact_matches(text: str, index: EntityIndex) -> list[_Match]:
    if index._exact_re is None:
        return []
    folded, origin = _folded_with_map(text)
    found = []
    # overlapping search: try every start so that a shorter form can still match
    # where a longer one overlaps a protected span
    pos = 0
    while pos <= len(folded):
        m = index._exact_re.search(folded, pos)
        if m is None:
            break
        s, e = origin[m.start()], origin[m.end() - 1] + 1
        found.append(_Match(s, e, "exact", index.entities_for(m.group(0))))
        pos = m.start() + 1
    return found


def find_exact_mentions(text: str, index: EntityIndex) -> list[str]:
    """Entity names (exact tier) still present in ``text`` outside entity tokens."""
    protected = _protected_spans(text)
    return [text[m.start : m.end] for m in _exact_matches(text, index) if not _overlaps((m.start, m.end), protected)]


def _override_matches(text: str, index: EntityIndex) -> list[_Match]:
    by_uid = {e.uid: e for e in index.entries if e.uid}
    out = []
    for span, (kind, uid) in sorted(index.overrides.items()):
        if kind == "PLAYER" and uid not in by_uid:
            raise ValueError(f"override {span!r} refers to unknown uid {uid!r}")
        ent = by_uid[uid] if kind == "PLAYER" else Entity(kind, (span,), uid=uid)
        for m in re.finditer(r"(?<!\w)" + re.escape(span) + r"(?!\w)", text):
            out.append(_Match(m.start(), m.end(), "override", [ent]))
    return out


def _fuzzy_matches(text: str, index: EntityIndex, taken: list[tuple[int, int]], threshold: float) -> list[_Match]:
    words = [(m.start(), m.end()) for m in re.finditer(r"\w+", text)]
    max_words = max((len(s.split()) for s in index.surfaces), default=1)
    out = []
    for i in range(len(words)):
        for n in range(1, max_words + 1):
            if i + n > len(words):
                break
            s, e = words[i][0], words[i + n - 1][1]
            chunk = text[s:e]
            if not re.fullmatch(r"\w+(?:[ \-']\w+)*", chunk):
                break
            if not chunk[0].isupper() or len(chunk) < _MIN_FUZZY_CHARS or _overlaps((s, e), taken):
                continue
            best, claim = 0.0, []
            for surface in index.surfaces:
                score = fuzzy_match(chunk, surface)
                if score > best:
                    best, claim = score, list(index.entities_for(surface))
                elif score == best and score > 0:
                    claim += [c for c in index.entities_for(surface) if c not in claim]
            if best >= threshold:
                out.append(_Match(s, e, "fuzzy", sorted(claim, key=lambda c: c.key), best))
    return out


def _select(matches: list[_Match], taken: list[tuple[int, int]], order) -> list[_Match]:
    chosen = []
    for m in sorted(matches, key=order):
        if not _overlaps((m.start, m.end), taken):
            chosen.append(m)
            taken.append((m.start, m.end))
    return chosen


def _resolve(m: _Match, text: str, team_mentions: list[tuple[int, str]]) -> tuple[Entity | None, str, bool]:
    """Pick the entity for a match. Returns (entity or None, kind, ambiguous)."""
    claimants = m.claimants
    if len({(c.kind, c.uid) for c in claimants}) == 1:
        return claimants[0], claimants[0].kind, False
    # nearest team mentioned in the same sentence decides
    sent_start = max([x.end() for x in _SENTENCE_END_RE.finditer(text, 0, m.start)], default=0)
    nxt = _SENTENCE_END_RE.search(text, m.end)
    sent_end = nxt.start() if nxt else len(text)
    near = [(abs(pos - m.start), name) for pos, name in team_mentions if sent_start <= pos < sent_end]
    if near:
        _, team = min(near)
        pick = [c for c in claimants if c.team == team]
        if len({(c.kind, c.uid) for c in pick}) == 1:
            return pick[0], pick[0].kind, False
    kind = min((c.kind for c in claimants), key=_KIND_PRIORITY.__getitem__)
    return None, kind, True


def anonymize(text: str, index: EntityIndex, fuzzy_threshold: float = FUZZY_THRESHOLD) -> AnonymizedText:
    """Replace entity mentions in ``text``.

    Returns the identified version (``[Player_uid]`` for players), the
    anonymized version (generic tokens only) and the spans that need a human
    look: fuzzy-tier matches and names claimed by several entities.
    """
    taken = _protected_spans(text)
    chosen = _select(_override_matches(text, index), taken, lambda m: (m.start, -(m.end - m.start)))
    chosen += _select(_exact_matches(text, index), taken, lambda m: (-(m.end - m.start), m.start))
    chosen += _select(
        _fuzzy_matches(text, index, taken, fuzzy_threshold), taken, lambda m: (-m.score, -(m.end - m.start), m.start)
    )
    chosen.sort(key=lambda m: m.start)

    team_mentions = [
        (m.start, m.claimants[0].team)
        for m in chosen
        if len(m.claimants) == 1 and m.claimants[0].kind == "TEAM"
    ]

    ident, anon, unresolved = [], [], []
    last = 0
    for m in chosen:
        ent, kind, ambiguous = _resolve(m, text, team_mentions)
        span = text[m.start : m.end]
        ident.append(text[last : m.start])
        anon.append(text[last : m.start])
        if kind == "PLAYER" and ent is not None and ent.uid:
            ident.append(f"[Player_{ent.uid}]")
        else:
            ident.append(GENERIC[kind])
        anon.append(GENERIC[kind])
        last = m.end
        if ambiguous:
            names = tuple(sorted({c.uid or c.surface_forms[0] for c in m.claimants}))
            unresolved.append(UnresolvedSpan(span, m.start, m.end, "ambiguous", names))
        elif m.tier == "fuzzy":
            unresolved.append(UnresolvedSpan(span, m.start, m.end, f"fuzzy:{m.score:.3f}", (ent.uid or ent.surface_forms[0],) if ent else ()))
    ident.append(text[last:])
    anon.append(text[last:])
    return AnonymizedText("".join(ident), "".join(anon), unresolved)


def identified_to_anonymized(identified: str) -> str:
    return re.sub(r"\[Player_[^\]\s]+\]", "[PLAYER]", identified)
