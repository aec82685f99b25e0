import numpy as np
import pytest
from hypothesis import settings

from vastream.domain import ContentModel, build_config_space, generate_profile
from vastream.scenarios import load_demo, toy_scenario

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def space():
    return build_config_space()


@pytest.fixture(scope="session")
def small_space():
    return build_config_space((1.0, 0.5), (30, 15), (21, 41))


@pytest.fixture(scope="session")
def small_profile(small_space):
    return generate_profile(ContentModel(base_size_bytes=200_000, seed=11), 20, small_space)


@pytest.fixture(scope="session")
def demo():
    return load_demo()


@pytest.fixture(scope="session")
def toy():
    return toy_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
