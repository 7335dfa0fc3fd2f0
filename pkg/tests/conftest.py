import shutil
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
BUNDLED_CORPUS = REPO_ROOT / "corpus"


@pytest.fixture(scope="session")
def bundled_corpus() -> Path:
    if not BUNDLED_CORPUS.exists():
        pytest.skip("bundled corpus missing; run `foretune make-corpus --out corpus`")
    return BUNDLED_CORPUS


@pytest.fixture
def corpus_copy(bundled_corpus, tmp_path) -> Path:
    """Private copy of the bundled corpus so stages can write work/ freely."""
    dst = tmp_path / "corpus"
    shutil.copytree(bundled_corpus, dst, ignore=shutil.ignore_patterns("work"))
    return dst
