from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdvc.anonymizer import (
    EntityIndex,
    anonymize,
    build_entity_index,
    edit_distance,
    find_exact_mentions,
    fold,
    fuzzy_match,
    identified_to_anonymized,
)
from sdvc.corpus import GameDocument, Player, TeamSheet
from sdvc.text import tokenize

from .conftest import FIXTURES


def team(name, coach, names):
    players = [Player(uid=u, name=n, jersey=i, starter=i <= 11) for i, (u, n) in enumerate(names, 1)]
    return TeamSheet(name=name, coach=coach, tactic="4-4-2", players=players)


def doc(home, away, referee="Mike Dean"):
    return GameDocument("g", (home, away), referee, [], home.name, away.name)


CHELSEA = team("Chelsea", "Antonio Conte", [("p7", "Eden Hazard"), ("p9", "Diego Costa"), ("p4", "Cesc Fàbregas")])
ARSENAL = team("Arsenal", "Arsène Wenger", [("alexis7", "Alexis Sánchez"), ("oz11", "Mesut Özil")])


@pytest.fixture
def index():
    return build_entity_index(doc(CHELSEA, ARSENAL))


def test_hazard_example(index):
    a = anonymize("Hazard (Chelsea) wins a corner", index)
    assert a.identified == "[Player_p7] ([TEAM]) wins a corner"
    assert a.anonymized == "[PLAYER] ([TEAM]) wins a corner"
    assert a.unresolved == []


def test_no_entities_unchanged(index):
    text = "The ball goes out for a throw-in."
    a = anonymize(text, index)
    assert (a.identified, a.anonymized, a.unresolved) == (text, text, [])


def test_index_teams_referee_coaches_only():
    idx = build_entity_index(doc(team("Arsenal", "Arsène Wenger", []), team("Chelsea", "Antonio Conte", [])))
    kinds = sorted(e.kind for e in idx.entries)
    assert kinds == ["COACH", "COACH", "REFEREE", "TEAM", "TEAM"]


def test_surname_extraction(index):
    sanchez = next(e for e in index.entries if e.uid == "alexis7")
    assert "Alexis Sánchez" in sanchez.surface_forms and "Sánchez" in sanchez.surface_forms
    # longer forms come first
    assert [len(s) for s in sanchez.surface_forms] == sorted((len(s) for s in sanchez.surface_forms), reverse=True)


def test_particle_surname():
    idx = build_entity_index(doc(team("Man City", "Pep Guardiola", [("kdb", "Kevin De Bruyne")]), CHELSEA))
    kdb = next(e for e in idx.entries if e.uid == "kdb")
    assert "De Bruyne" in kdb.surface_forms and "Kevin De Bruyne" in kdb.surface_forms


def test_diacritics_folded(index):
    a = anonymize("Sanchez and OZIL combine", index)
    assert a.identified == "[Player_alexis7] and [Player_oz11] combine"


def test_override_honored():
    # "Sanchez" as a literal override, independent of the exact tier
    idx = build_entity_index(doc(CHELSEA, ARSENAL), FIXTURES / "overrides.json")
    a = anonymize("Sanchez runs at the Gunners defence", idx)
    assert a.identified == "[Player_alexis7] runs at [TEAM] defence"


def test_override_unknown_uid():
    idx = build_entity_index(doc(CHELSEA, ARSENAL), {"Bob": ("PLAYER", "nobody")})
    with pytest.raises(ValueError):
        anonymize("Bob", idx)


def test_word_boundary():
    idx = build_entity_index(doc(team("Real", "Coach Person", []), CHELSEA))
    text = "He really wanted that one. Real press high."
    assert anonymize(text, idx).anonymized == "He really wanted that one. [TEAM] press high."


def test_longest_match_wins(index):
    a = anonymize("Eden Hazard scores", index)
    assert a.identified == "[Player_p7] scores"


def test_fuzzy_de_bruyne():
    # lineup spells the name as one word; the commentary splits it
    idx = build_entity_index(doc(team("Man City", "Pep Guardiola", [("kdb", "Kevin Debruyne")]), CHELSEA))
    a = anonymize("De Bruyne curls it in", idx)
    assert a.identified == "[Player_kdb] curls it in"
    assert len(a.unresolved) == 1
    u = a.unresolved[0]
    assert (u.text, u.candidates) == ("De Bruyne", ("kdb",))
    assert u.reason.startswith("fuzzy:")
    assert fuzzy_match("De Bruyne", "Debruyne") >= 0.85


def test_fuzzy_below_threshold_left_alone(index):
    a = anonymize("Hizzard shoots", index, fuzzy_threshold=0.95)
    assert a.identified == "Hizzard shoots"


def test_ambiguous_resolved_by_team():
    home = team("Man City", "Pep Guardiola", [("ds21", "David Silva")])
    away = team("Chelsea", "Antonio Conte", [("ts6", "Thiago Silva")])
    idx = build_entity_index(doc(home, away))
    assert "silva" in idx.ambiguous
    a = anonymize("Silva (Chelsea) heads clear.", idx)
    assert a.identified == "[Player_ts6] ([TEAM]) heads clear."
    a = anonymize("Silva heads clear.", idx)
    assert a.identified == "[PLAYER] heads clear."
    assert a.anonymized == "[PLAYER] heads clear."
    assert [u.reason for u in a.unresolved] == ["ambiguous"]


def test_fold():
    assert fold("Sánchez") == "sanchez" and fold("ÖZIL") == "ozil"


def test_fuzzy_match_trivial():
    assert fuzzy_match("Sánchez", "sanchez") == 1.0
    assert fuzzy_match("Mkhallati", "Mkhallati") == 1.0


@lru_cache(maxsize=None)
def brute_edit(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(brute_edit(a[1:], b) + 1, brute_edit(a, b[1:]) + 1, brute_edit(a[1:], b[1:]) + (a[0] != b[0]))


def test_oezil_against_oracle():
    a, b = fold("Oezil"), fold("Özil")
    expected = 1 - brute_edit(a, b) / max(len(a), len(b))
    assert fuzzy_match("Oezil", "Özil") == expected == pytest.approx(0.8)


@given(st.text("abcé", max_size=6), st.text("abcé", max_size=6))
def test_edit_distance_oracle(a, b):
    assert edit_distance(a, b) == brute_edit(a, b)


@given(st.text("abCé", min_size=1, max_size=6), st.text("abCé", min_size=1, max_size=6))
def test_fuzzy_symmetric_bounded(a, b):
    s = fuzzy_match(a, b)
    assert s == fuzzy_match(b, a) and 0.0 <= s <= 1.0
    assert (s == 1.0) == (fold(a) == fold(b))


SENTENCES = [
    "Hazard (Chelsea) wins a corner.",
    "Diego Costa is booked by Mike Dean.",
    "Özil finds Sánchez, who scores for Arsenal!",
    "Antonio Conte and Arsène Wenger shake hands.",
    "Fàbregas plays it long. Costa cannot reach it.",
]


@given(st.lists(st.sampled_from(SENTENCES), min_size=1, max_size=3).map(" ".join))
def test_idempotent(text):
    idx = build_entity_index(doc(CHELSEA, ARSENAL))
    a = anonymize(text, idx)
    again = anonymize(a.identified, idx)
    assert again.identified == a.identified and again.unresolved == []
    assert anonymize(a.anonymized, idx).anonymized == a.anonymized


@settings(max_examples=25)
@given(st.randoms(use_true_random=False), st.sampled_from(SENTENCES))
def test_order_independent(rnd, text):
    idx = build_entity_index(doc(CHELSEA, ARSENAL))
    entries = list(idx.entries)
    rnd.shuffle(entries)
    shuffled = EntityIndex(entries=entries, overrides=dict(idx.overrides))
    assert anonymize(text, shuffled) == anonymize(text, idx)


def test_fixture_soundness(fixture_docs):
    for d in fixture_docs:
        idx = build_entity_index(d)
        for c in d.captions:
            a = anonymize(c.text_original, idx)
            assert find_exact_mentions(a.anonymized, idx) == []
            assert tokenize(identified_to_anonymized(a.identified)) == tokenize(a.anonymized)
            assert a.identified == c.text_identified
