from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from prlatency.cli import bundled_path
from prlatency.ingest import load_archive

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def fixture_archive() -> Path:
    return bundled_path("fixture_archive")


@pytest.fixture(scope="session")
def fixture_dataset(fixture_archive):
    return load_archive(fixture_archive)


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
