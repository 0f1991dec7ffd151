from __future__ import annotations

from datetime import date
from pathlib import Path

import pytest

from regwatch.ingest import Article

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = FIXTURES / "golden"


def make_article(body: str, article_id: str = "a-1") -> Article:
    return Article(article_id, "Test", date(2019, 1, 2), ("Federal Reserve System",), body)


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


# Acceptance criterion number -> PASS/FAIL line, filled by test_acceptance.py.
RESULTS: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        item.rep_call = report


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
