import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from convtok.corpus import Conversation, EntitySpan, Segment  # noqa: E402

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Collect one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number: int, ok: bool, detail: str):
        _ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def two_speaker_conversation():
    return Conversation(
        "c1",
        (
            Segment(0.0, 2.0, "A", ("hello", "there")),
            Segment(2.5, 5.0, "A", ("how", "are", "you")),
            Segment(5.5, 8.0, "B", ("my", "name", "is", "alexa"), (EntitySpan(3, 3),)),
        ),
    )
