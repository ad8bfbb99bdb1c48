"""Porter (1980) suffix-stripping stemmer, original rule set.

The rule tables are plain data so that tests can pin them against a fixture;
``STEMMER_VERSION`` changes whenever a table does.
"""

from __future__ import annotations

from functools import lru_cache

STEMMER_VERSION = "porter-1980/1"

STEP1A_RULES = (("sses", "ss"), ("ies", "i"), ("ss", "ss"), ("s", ""))
STEP1B_FIXUPS = (("at", "ate"), ("bl", "ble"), ("iz", "ize"))
STEP2_RULES = (
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
)
STEP3_RULES = (
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
)
STEP4_SUFFIXES = (
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment",
    "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
)


def _is_cons(w: str, i: int) -> bool:
    ch = w[i]
    if ch in "aeiou":
        return False
    if ch == "y":
        return i == 0 or not _is_cons(w, i - 1)
    return True


def measure(stem: str) -> int:
    """Number of VC sequences in ``stem`` ([C](VC)^m[V])."""
    m, i, n = 0, 0, len(stem)
    while i < n and _is_cons(stem, i):
        i += 1
    while i < n:
        while i < n and not _is_cons(stem, i):
            i += 1
        if i >= n:
            break
        while i < n and _is_cons(stem, i):
            i += 1
        m += 1
    return m


def _has_vowel(stem: str) -> bool:
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _ends_double_cons(w: str) -> bool:
    return len(w) >= 2 and w[-1] == w[-2] and _is_cons(w, len(w) - 1)


def _ends_cvc(w: str) -> bool:
    return (
        len(w) >= 3
        and _is_cons(w, len(w) - 3)
        and not _is_cons(w, len(w) - 2)
        and _is_cons(w, len(w) - 1)
        and w[-1] not in "wxy"
    )


def step1a(w: str) -> str:
    for suf, rep in STEP1A_RULES:
        if w.endswith(suf):
            return w[: len(w) - len(suf)] + rep
    return w


def step1b(w: str) -> str:
    if w.endswith("eed"):
        stem = w[:-3]
        return stem + "ee" if measure(stem) > 0 else w
    for suf in ("ed", "ing"):
        if w.endswith(suf):
            stem = w[: -len(suf)]
            if not _has_vowel(stem):
                return w
            for end, rep in STEP1B_FIXUPS:
                if stem.endswith(end):
                    return stem[: -len(end)] + rep
            if _ends_double_cons(stem) and stem[-1] not in "lsz":
                return stem[:-1]
            if measure(stem) == 1 and _ends_cvc(stem):
                return stem + "e"
            return stem
    return w


def step1c(w: str) -> str:
    if w.endswith("y") and _has_vowel(w[:-1]):
        return w[:-1] + "i"
    return w


def _apply_longest(w: str, rules, min_m: int) -> str:
    best = None
    for suf, rep in rules:
        if w.endswith(suf) and (best is None or len(suf) > len(best[0])):
            best = (suf, rep)
    if best is None:
        return w
    stem = w[: len(w) - len(best[0])]
    return stem + best[1] if measure(stem) > min_m else w


def step2(w: str) -> str:
    return _apply_longest(w, STEP2_RULES, 0)


def step3(w: str) -> str:
    return _apply_longest(w, STEP3_RULES, 0)


def step4(w: str) -> str:
    best = max((s for s in STEP4_SUFFIXES if w.endswith(s)), key=len, default=None)
    if best is None:
        return w
    stem = w[: len(w) - len(best)]
    if measure(stem) <= 1:
        return w
    if best == "ion" and not (stem.endswith("s") or stem.endswith("t")):
        return w
    return stem


def step5a(w: str) -> str:
    if w.endswith("e"):
        stem = w[:-1]
        m = measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            return stem
    return w


def step5b(w: str) -> str:
    if measure(w) > 1 and _ends_double_cons(w) and w.endswith("l"):
        return w[:-1]
    return w


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    w = word.lower()
    if len(w) <= 2 or not w.isalpha():
        return w
    for step in (step1a, step1b, step1c, step2, step3, step4, step5a, step5b):
        w = step(w)
    return w


def rule_tables() -> dict:
    return {
        "version": STEMMER_VERSION,
        "step1a": [list(r) for r in STEP1A_RULES],
        "step1b_fixups": [list(r) for r in STEP1B_FIXUPS],
        "step2": [list(r) for r in STEP2_RULES],
        "step3": [list(r) for r in STEP3_RULES],
        "step4": list(STEP4_SUFFIXES),
    }
