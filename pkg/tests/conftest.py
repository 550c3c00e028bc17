"""Shared fixtures: in-memory repositories are the default for speed."""

from pathlib import Path

import pytest

from sumhub.demo import load_demo
from sumhub.metamodel import avionics_metamodel
from sumhub.store import Repository

GOLDEN_DIR = Path(__file__).resolve().parent / "goldens"


def make_repo(**config) -> Repository:
    config.setdefault("default_prefix", "INES")
    config.setdefault("deep_verify", True)
    return Repository(avionics_metamodel(), data_dir=None, **config)


@pytest.fixture
def meta():
    return avionics_metamodel()


@pytest.fixture
def fresh_repo():
    return make_repo()


@pytest.fixture
def demo_repo():
    repo = make_repo()
    load_demo(repo)
    return repo
