"""Shared fixtures: adapter script paths and reusable corpora."""

from __future__ import annotations

import stat
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import graded_corpus, texture_corpus  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def _script(name: str) -> list[str]:
    """Invocation argv for a fixture adapter (explicit interpreter, portable)."""
    path = FIXTURES / name
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
    return [sys.executable, str(path)]


@pytest.fixture(scope="session")
def identity_adapter_argv() -> list[str]:
    return _script("identity_adapter.py")


@pytest.fixture(scope="session")
def broken_decoder_argv() -> list[str]:
    return _script("broken_decoder_adapter.py")


@pytest.fixture(scope="session")
def feat_adapter_argv() -> list[str]:
    return _script("feat_extractor_adapter.py")


@pytest.fixture(scope="session")
def ref_adapter_argv() -> list[str]:
    return _script("ref_cli_adapter.py")


@pytest.fixture(scope="session")
def crashing_adapter_argv() -> list[str]:
    return _script("crashing_adapter.py")


@pytest.fixture(scope="session")
def sleeper_adapter_argv() -> list[str]:
    return _script("sleeper_adapter.py")


@pytest.fixture(scope="session")
def texture_corpus_50():
    return texture_corpus(50)


@pytest.fixture(scope="session")
def graded_corpus_50():
    return graded_corpus(50)
