from __future__ import annotations

from pathlib import Path

import pytest

from cbi.consolidate import consolidate, load_project
from cbi.runtime import compile_model

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fig5_dir() -> Path:
    return DATA / "fig5"


@pytest.fixture(scope="session")
def fig5_programs(fig5_dir):
    return load_project(fig5_dir / "manifest.json")


@pytest.fixture(scope="session")
def fig5_model(fig5_programs):
    programs, libs = fig5_programs
    return consolidate(programs, libs)


@pytest.fixture(scope="session")
def fig5_prog(fig5_model):
    return compile_model(fig5_model)
