from pathlib import Path

import pytest

from dyneq.problem import load_problem
from dyneq.symexpr import Sampler

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def sampler():
    return Sampler(seed=42)


@pytest.fixture(scope="session")
def corpus():
    """Builtin problems keyed by name, loaded once."""
    names = ["example47", "double-chain", "prolong-pair", "pvtol", "single-control"]
    return {name: load_problem(name) for name in names}


def fixture_path(name: str) -> str:
    return str(FIXTURES / name)
