from __future__ import annotations

from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_corpus_dir() -> Path:
    return FIXTURES / "corpus"


@pytest.fixture(scope="session")
def fluency_corpus_path() -> Path:
    return Path(__file__).parent / "data" / "fluency_corpus.txt"


@pytest.fixture(scope="session")
def stub_adapter_path() -> Path:
    return Path(__file__).parent / "stub_adapter.py"
