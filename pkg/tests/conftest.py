import contextlib
import time

import pytest

# (criterion, passed, detail) lines filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def criterion():
    """``with criterion(k) as rec: ...; rec(detail)``: PASS unless the block raises."""
    @contextlib.contextmanager
    def track(k):
        notes = []
        t0 = time.perf_counter()
        try:
            yield notes.append
        except BaseException as exc:
            ACCEPTANCE[k] = (False, f"{'; '.join(notes)} [{type(exc).__name__}: {exc}]".strip())
            raise
        ACCEPTANCE[k] = (True, f"{'; '.join(notes)} ({time.perf_counter() - t0:.1f} s)")

    return track
