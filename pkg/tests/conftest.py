from pathlib import Path

import pytest

from sdvc.corpus import load_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_docs():
    return load_corpus(FIXTURES / "corpus")


@pytest.fixture(scope="session")
def arsenal_city(fixture_docs):
    return next(d for d in fixture_docs if "Arsenal" in d.game_id)
