"""Game documents, feature files and corpus statistics.

A game document is one JSON file per game holding the lineups and the
timestamped commentary. Unknown keys are kept at every level so that
``serialize_game_document(parse_game_document(b))`` reproduces the input.
"""

from __future__ import annotations

import copy
import json
import re
import struct
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .text import is_word, tokenize

LABELS = (
    "corner",
    "substitution",
    "yellow card",
    "whistle",
    "soccer ball",
    "time",
    "injury",
    "fun fact",
    "attendance",
    "penalty",
    "red card",
    "own goal",
    "missed penalty",
    "other",
)
OUT_OF_GAME_LABELS = frozenset({"fun fact", "attendance"})
MAX_HALF_SECONDS = 4200.0
FEATURE_DIM = 512

_CLOCK_RE = re.compile(r"^\s*([0-9]+)\s*-\s*([0-9]+):([0-9]{2})\s*$")
_PLAYER_UID_RE = re.compile(r"\[Player_([^\]\s]+)\]")


class CorpusWarning(UserWarning):
    pass


class DocumentParseError(ValueError):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class DocumentValidationError(ValueError):
    def __init__(self, violations: list[str], source: str = ""):
        self.violations = list(violations)
        head = f"{source}: " if source else ""
        super().__init__(head + f"{len(violations)} violation(s):\n  " + "\n  ".join(violations))


@dataclass(frozen=True, order=True)
class GameClock:
    half: int
    seconds: float

    @classmethod
    def parse(cls, text: str) -> "GameClock":
        m = _CLOCK_RE.match(text)
        if m is None:
            raise ValueError(f"bad game time {text!r}, expected 'H - MM:SS'")
        half, minutes, secs = (int(g) for g in m.groups())
        return cls(half, float(minutes * 60 + secs))

    def format(self) -> str:
        total = int(round(self.seconds))
        return f"{self.half} - {total // 60:02d}:{total % 60:02d}"

    def __str__(self) -> str:
        return self.format()

    def problems(self) -> list[str]:
        out = []
        if self.half not in (1, 2):
            out.append(f"half must be 1 or 2, got {self.half}")
        if not self.seconds >= 0:
            out.append(f"seconds must be >= 0, got {self.seconds}")
        return out


@dataclass
class CaptionRecord:
    clock: GameClock
    text_original: str
    text_identified: str
    text_anonymized: str
    important: bool = False
    label: str = "other"
    label_raw: str | None = None  # set when the file carried a label outside LABELS
    extra: dict[str, Any] = field(default_factory=dict)

    def text(self, version: str = "anonymized") -> str:
        if version == "original":
            return self.text_original
        if version == "identified":
            return self.text_identified
        if version == "anonymized":
            return self.text_anonymized
        raise ValueError(f"unknown text version {version!r}")


@dataclass
class Player:
    uid: str
    name: str
    jersey: int
    starter: bool
    events: list[dict[str, Any]] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class TeamSheet:
    name: str
    coach: str = ""
    tactic: str = ""
    players: list[Player] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def starters(self) -> list[Player]:
        return [p for p in self.players if p.starter]


@dataclass
class GameDocument:
    game_id: str
    teams: tuple[TeamSheet, TeamSheet]
    referee: str
    captions: list[CaptionRecord]
    home_team: str = ""
    away_team: str = ""
    extra: dict[str, Any] = field(default_factory=dict)
    lineup_keys: tuple[str, str] | None = ("home", "away")  # None: lineups stored as a list

    def players(self) -> list[Player]:
        return [p for t in self.teams for p in t.players]

    def player_by_uid(self) -> dict[str, Player]:
        return {p.uid: p for p in self.players()}


# --------------------------------------------------------------------- parsing

_DOC_KEYS = {"gameAwayTeam", "gameHomeTeam", "referee", "lineups", "annotations"}
_TEAM_KEYS = {"name", "coach", "tactic", "players"}
_PLAYER_KEYS = {"name", "uid", "jersey", "starter", "events"}
_ANN_KEYS = {"gameTime", "description", "identified", "anonymized", "important", "label"}


def _extra(raw: dict, known: set[str]) -> dict:
    return {k: copy.deepcopy(v) for k, v in raw.items() if k not in known}


def _parse_player(raw: dict, where: str, errors: list[str]) -> Player:
    uid = raw.get("uid")
    if uid is None or str(uid) == "":
        errors.append(f"{where}: missing uid")
    jersey = raw.get("jersey", -1)
    try:
        jersey = int(jersey)
    except (TypeError, ValueError):
        errors.append(f"{where}: jersey {jersey!r} is not an integer")
        jersey = -1
    return Player(
        uid=str(uid if uid is not None else ""),
        name=str(raw.get("name", "")),
        jersey=jersey,
        starter=bool(raw.get("starter", False)),
        events=copy.deepcopy(raw.get("events", [])),
        extra=_extra(raw, _PLAYER_KEYS),
    )


def _parse_team(raw: dict, where: str, errors: list[str]) -> TeamSheet:
    players = [
        _parse_player(p, f"{where}.players[{i}]", errors) for i, p in enumerate(raw.get("players", []))
    ]
    return TeamSheet(
        name=str(raw.get("name", "")),
        coach=str(raw.get("coach", "")),
        tactic=str(raw.get("tactic", "")),
        players=players,
        extra=_extra(raw, _TEAM_KEYS),
    )


def _parse_annotation(raw: dict, where: str, errors: list[str]) -> CaptionRecord | None:
    try:
        clock = GameClock.parse(str(raw.get("gameTime", "")))
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
        return None
    label_raw = raw.get("label", "other")
    label = str(label_raw).strip().lower()
    keep_raw = None
    if label not in LABELS:
        warnings.warn(f"{where}: unknown label {label_raw!r} read as 'other'", CorpusWarning, stacklevel=3)
        label, keep_raw = "other", label_raw
    elif label != label_raw:
        keep_raw = label_raw
    return CaptionRecord(
        clock=clock,
        text_original=str(raw.get("description", "")),
        text_identified=str(raw.get("identified", "")),
        text_anonymized=str(raw.get("anonymized", "")),
        important=bool(raw.get("important", False)),
        label=label,
        label_raw=keep_raw,
        extra=_extra(raw, _ANN_KEYS),
    )


def game_document_from_dict(raw: dict, game_id: str = "", validate: bool = True) -> GameDocument:
    errors: list[str] = []
    lineups = raw.get("lineups", {})
    if isinstance(lineups, dict):
        keys = tuple(lineups.keys())
        if len(keys) != 2:
            errors.append(f"lineups must hold exactly 2 teams, found {len(keys)}")
        keys = (keys + ("home", "away"))[:2]
        team_raw = [lineups.get(k, {}) for k in keys]
        lineup_keys: tuple[str, str] | None = keys  # type: ignore[assignment]
    else:
        if len(lineups) != 2:
            errors.append(f"lineups must hold exactly 2 teams, found {len(lineups)}")
        team_raw = (list(lineups) + [{}, {}])[:2]
        lineup_keys = None
    teams = tuple(_parse_team(t, f"lineups[{i}]", errors) for i, t in enumerate(team_raw))

    captions = []
    for i, a in enumerate(raw.get("annotations", [])):
        rec = _parse_annotation(a, f"annotations[{i}]", errors)
        if rec is not None:
            captions.append(rec)
    captions.sort(key=lambda c: c.clock)  # stable: ties keep file order

    doc = GameDocument(
        game_id=game_id,
        teams=teams,  # type: ignore[arg-type]
        referee=str(raw.get("referee", "")),
        captions=captions,
        home_team=str(raw.get("gameHomeTeam", "")),
        away_team=str(raw.get("gameAwayTeam", "")),
        extra=_extra(raw, _DOC_KEYS),
        lineup_keys=lineup_keys,
    )
    if validate:
        errors.extend(validate_document(doc))
        if errors:
            raise DocumentValidationError(errors, game_id)
    return doc


def parse_game_document(data: bytes, game_id: str = "", validate: bool = True) -> GameDocument:
    """Parse one game JSON file.

    Syntax errors raise :class:`DocumentParseError` carrying the byte offset.
    With ``validate`` every invariant violation is collected and raised
    together as :class:`DocumentValidationError`.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DocumentParseError(f"invalid UTF-8: {exc.reason}", exc.start) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise DocumentParseError(exc.msg, offset) from exc
    if not isinstance(raw, dict):
        raise DocumentParseError("top-level value must be an object", 0)
    return game_document_from_dict(raw, game_id=game_id, validate=validate)


def validate_document(doc: GameDocument) -> list[str]:
    """All invariant violations of ``doc`` (empty list when valid)."""
    from .anonymizer import build_entity_index, find_exact_mentions

    errors: list[str] = []
    uids: dict[str, str] = {}
    for ti, team in enumerate(doc.teams):
        where = f"team {team.name or ti}"
        if not team.name.strip():
            errors.append(f"lineups[{ti}]: team name is empty")
        n_start = len(team.starters)
        if n_start != 11:
            errors.append(f"{where}: expected 11 starters, found {n_start}")
        jerseys = Counter(p.jersey for p in team.players)
        for j, c in sorted(jerseys.items()):
            if c > 1:
                errors.append(f"{where}: jersey {j} used by {c} players")
        for p in team.players:
            if p.uid in uids:
                errors.append(f"{where}: player uid {p.uid!r} duplicates {uids[p.uid]}")
            else:
                uids[p.uid] = p.name

    index = build_entity_index(doc)
    for ci, cap in enumerate(doc.captions):
        where = f"caption {ci} at {cap.clock}"
        errors.extend(f"{where}: {p}" for p in cap.clock.problems())
        if cap.clock.seconds > MAX_HALF_SECONDS:
            warnings.warn(f"{doc.game_id} {where}: beyond {MAX_HALF_SECONDS:.0f}s", CorpusWarning, stacklevel=2)
        for version in ("original", "identified", "anonymized"):
            if not cap.text(version).strip():
                errors.append(f"{where}: {version} text is empty")
        for uid in _PLAYER_UID_RE.findall(cap.text_identified):
            if uid not in uids:
                errors.append(f"{where}: identified text references unknown player uid {uid!r}")
        for span in find_exact_mentions(cap.text_anonymized, index):
            errors.append(f"{where}: anonymized text still contains entity name {span!r}")
    return errors


# ----------------------------------------------------------------- serializing

def _player_to_dict(p: Player) -> dict:
    d = {"name": p.name, "uid": p.uid, "jersey": p.jersey, "starter": p.starter, "events": copy.deepcopy(p.events)}
    d.update(copy.deepcopy(p.extra))
    return d


def _team_to_dict(t: TeamSheet) -> dict:
    d = {"name": t.name, "coach": t.coach, "tactic": t.tactic, "players": [_player_to_dict(p) for p in t.players]}
    d.update(copy.deepcopy(t.extra))
    return d


def _caption_to_dict(c: CaptionRecord) -> dict:
    d = {
        "gameTime": c.clock.format(),
        "description": c.text_original,
        "identified": c.text_identified,
        "anonymized": c.text_anonymized,
        "important": c.important,
        "label": c.label_raw if c.label_raw is not None else c.label,
    }
    d.update(copy.deepcopy(c.extra))
    return d


def game_document_to_dict(doc: GameDocument) -> dict:
    teams = [_team_to_dict(t) for t in doc.teams]
    lineups: Any = dict(zip(doc.lineup_keys, teams)) if doc.lineup_keys is not None else teams
    d = {
        "gameHomeTeam": doc.home_team,
        "gameAwayTeam": doc.away_team,
        "referee": doc.referee,
        "lineups": lineups,
        "annotations": [_caption_to_dict(c) for c in doc.captions],
    }
    d.update(copy.deepcopy(doc.extra))
    return d


def serialize_game_document(doc: GameDocument) -> bytes:
    return json.dumps(game_document_to_dict(doc), ensure_ascii=False, indent=2).encode("utf-8")


# ---------------------------------------------------------------- corpus files

def game_id_for(path: Path, root: Path) -> str:
    rel = path.relative_to(root)
    if rel.stem.lower().startswith("labels"):
        return rel.parent.as_posix()
    return rel.with_suffix("").as_posix()


def iter_document_paths(root: str | Path) -> list[Path]:
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(p for p in root.rglob("*.json") if p.is_file())


def load_corpus(root: str | Path, validate: bool = True) -> list[GameDocument]:
    """Load every game JSON below ``root``, sorted by game id.

    With ``validate`` the violations of all files are gathered into one
    :class:`DocumentValidationError`.
    """
    root = Path(root)
    base = root if root.is_dir() else root.parent
    docs, problems = [], []
    for path in iter_document_paths(root):
        gid = game_id_for(path, base)
        try:
            docs.append(parse_game_document(path.read_bytes(), game_id=gid, validate=validate))
        except DocumentValidationError as exc:
            problems.extend(f"{gid}: {v}" for v in exc.violations)
        except DocumentParseError as exc:
            problems.append(f"{gid}: {exc}")
    if problems:
        raise DocumentValidationError(problems, str(root))
    return sorted(docs, key=lambda d: d.game_id)


def filter_corpus(
    docs: Sequence[GameDocument], drop_labels: Iterable[str]
) -> tuple[list[GameDocument], dict[str, int]]:
    """Drop captions whose label is in ``drop_labels``; returns removal counts per label."""
    drop = set(drop_labels)
    unknown = drop - set(LABELS)
    if unknown:
        raise ValueError(f"unknown labels {sorted(unknown)}")
    removed: Counter[str] = Counter()
    out = []
    for d in docs:
        kept = []
        for c in d.captions:
            if c.label in drop:
                removed[c.label] += 1
            else:
                kept.append(c)
        out.append(GameDocument(d.game_id, d.teams, d.referee, kept, d.home_team, d.away_team, d.extra, d.lineup_keys))
    return out, {label: removed[label] for label in sorted(drop)}


# -------------------------------------------------------------------- features

FEATURE_MAGIC = b"SNCF"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIII")


class FeatureFileError(ValueError):
    pass


@dataclass
class FeatureSequence:
    game_id: str
    half: int
    fps: float
    data: np.ndarray  # T x D float32

    @property
    def n_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps


def write_features(path: str | Path, data: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(data, dtype="<f4"))
    if arr.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def load_features(
    path: str | Path,
    fps: float = 2.0,
    game_id: str = "",
    half: int = 1,
    expected_dim: int = FEATURE_DIM,
    duration_seconds: float | None = None,
) -> FeatureSequence:
    """Read a ``SNCF`` feature file (16-byte header then little-endian float32 rows).

    ``duration_seconds``, when given, is the half's length; the frame count
    must then be within 5% of ``fps * duration_seconds``.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _FEATURE_HEADER.size:
        raise FeatureFileError(f"{path}: file shorter than the {_FEATURE_HEADER.size}-byte header")
    magic, version, n_rows, n_cols = _FEATURE_HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise FeatureFileError(f"{path}: unsupported version {version}")
    if n_cols != expected_dim:
        raise FeatureFileError(f"{path}: feature dimension {n_cols}, expected {expected_dim} (reduce features first)")
    body = raw[_FEATURE_HEADER.size :]
    if len(body) != 4 * n_rows * n_cols:
        raise FeatureFileError(f"{path}: payload holds {len(body)} bytes, header implies {4 * n_rows * n_cols}")
    data = np.frombuffer(body, dtype="<f4").reshape(n_rows, n_cols).astype(np.float32)
    bad = np.argwhere(~np.isfinite(data))
    if len(bad):
        r, c = bad[0]
        raise FeatureFileError(f"{path}: non-finite value at row {r}, col {c}")
    if fps not in (1, 2, 1.0, 2.0):
        warnings.warn(f"unusual feature rate {fps} fps", CorpusWarning, stacklevel=2)
    if duration_seconds is not None:
        expected = fps * duration_seconds
        if abs(n_rows - expected) > 0.05 * expected:
            raise FeatureFileError(f"{path}: {n_rows} frames, expected about {expected:.0f} at {fps} fps")
    return FeatureSequence(game_id=game_id, half=half, fps=float(fps), data=data)


# ------------------------------------------------------------------ statistics

@dataclass
class CorpusStats:
    n_games: int
    n_captions: int
    captions_per_game_mean: float
    words_per_caption_histogram: dict[int, int]
    word_frequency: dict[str, int]
    temporal_histogram: dict[int, list[int]]
    bin_seconds: int
    text_version: str

    @property
    def words_per_caption_mean(self) -> float:
        if not self.n_captions:
            return 0.0
        return sum(k * v for k, v in self.words_per_caption_histogram.items()) / self.n_captions

    @property
    def words_per_caption_max(self) -> int:
        return max(self.words_per_caption_histogram, default=0)

    def to_dict(self, top_words: int = 50) -> dict:
        top = sorted(self.word_frequency.items(), key=lambda kv: (-kv[1], kv[0]))[:top_words]
        return {
            "n_games": self.n_games,
            "n_captions": self.n_captions,
            "captions_per_game_mean": round(self.captions_per_game_mean, 6),
            "words_per_caption_mean": round(self.words_per_caption_mean, 6),
            "words_per_caption_max": self.words_per_caption_max,
            "words_per_caption_histogram": {str(k): v for k, v in sorted(self.words_per_caption_histogram.items())},
            "top_words": dict(top),
            "n_distinct_words": len(self.word_frequency),
            "bin_seconds": self.bin_seconds,
            "temporal_histogram": {str(h): v for h, v in sorted(self.temporal_histogram.items())},
            "text_version": self.text_version,
        }


def compute_stats(docs: Sequence[GameDocument], bin_seconds: int = 60, text_version: str = "original") -> CorpusStats:
    """Caption counts, word-length histogram, word frequencies and per-half timing.

    Pure punctuation tokens are not counted as words.
    """
    if bin_seconds < 1:
        raise ValueError("bin_seconds must be >= 1")
    lengths: Counter[int] = Counter()
    freq: Counter[str] = Counter()
    per_half: dict[int, Counter[int]] = {1: Counter(), 2: Counter()}
    n_captions = 0
    for d in docs:
        for c in d.captions:
            n_captions += 1
            words = [t for t in tokenize(c.text(text_version)) if is_word(t)]
            lengths[len(words)] += 1
            freq.update(words)
            per_half.setdefault(c.clock.half, Counter())[int(c.clock.seconds // bin_seconds)] += 1
    temporal = {}
    for half, bins in per_half.items():
        n_bins = max(bins, default=-1) + 1
        temporal[half] = [bins.get(i, 0) for i in range(n_bins)]
    return CorpusStats(
        n_games=len(docs),
        n_captions=n_captions,
        captions_per_game_mean=n_captions / len(docs) if docs else 0.0,
        words_per_caption_histogram=dict(sorted(lengths.items())),
        word_frequency=dict(freq),
        temporal_histogram=temporal,
        bin_seconds=bin_seconds,
        text_version=text_version,
    )


def start_of_half_peak(stats: CorpusStats) -> bool:
    """Whether the first minute of each half out-counts the mean of minutes 2 to 10."""
    if stats.bin_seconds != 60:
        raise ValueError("peak check expects 60-second bins")
    ok = True
    for half in (1, 2):
        bins = stats.temporal_histogram.get(half, [])
        bins = bins + [0] * max(0, 10 - len(bins))
        ok &= bins[0] > float(np.mean(bins[1:10]))
    return bool(ok)
