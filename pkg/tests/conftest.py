import contextlib

import pytest

_ACCEPTANCE: dict = {}


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)


@pytest.fixture()
def criterion():
    """``with criterion(3, "title") as c:`` records a PASS/FAIL line for the summary."""

    @contextlib.contextmanager
    def track(number, title):
        c = Criterion(number, title)
        try:
            yield c
        except BaseException:
            _ACCEPTANCE[number] = ("FAIL", c)
            raise
        _ACCEPTANCE[number] = ("PASS", c)

    return track


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, c = _ACCEPTANCE[number]
        detail = "; ".join(c.details)
        tr.write_line(f"criterion {number} {status}: {c.title}" + (f" ({detail})" if detail else ""))
