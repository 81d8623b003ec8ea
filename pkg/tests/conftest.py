from pathlib import Path

import pytest

import autopatch as ap
from autopatch import router

PROGRAMS = Path(__file__).resolve().parent.parent / "programs"


@pytest.fixture(scope="session")
def lorenz_source() -> str:
    return (PROGRAMS / "lorenz.odedsl").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def lorenz_program(lorenz_source):
    return ap.compile_source(lorenz_source)


@pytest.fixture(scope="session")
def lorenz_system(lorenz_program):
    return ap.normalize(lorenz_program)


@pytest.fixture(scope="session")
def lorenz_graph(lorenz_system, lorenz_program):
    return ap.build_circuit(lorenz_system, lorenz_program)


@pytest.fixture(scope="session")
def lorenz_design(lorenz_graph):
    return router.route_design(lorenz_graph, ap.lucidac_spec())
