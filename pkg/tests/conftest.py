import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ptel.cli import corpus_path  # noqa: E402
from ptel.program import parse_program  # noqa: E402
from ptel.specfile import parse_spec  # noqa: E402


def load_corpus_program(name):
    return parse_program(corpus_path(name).read_text())


def load_corpus_spec(name):
    return parse_spec(corpus_path(name).read_text())


@pytest.fixture(scope="session")
def peterson():
    return load_corpus_program("peterson.prog")


@pytest.fixture(scope="session")
def peterson_spec():
    return load_corpus_spec("peterson.spec")


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
