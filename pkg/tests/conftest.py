import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"
_ACCEPTANCE = []


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def criterion(request):
    """Time an acceptance criterion and record a pass/fail line for the summary."""

    @contextmanager
    def run(number, title, limit_s=None):
        start = time.perf_counter()
        ok = False
        try:
            yield
            elapsed = time.perf_counter() - start
            if limit_s is not None:
                assert elapsed < limit_s, f"criterion {number} took {elapsed:.2f}s (limit {limit_s}s)"
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({elapsed:.2f}s)"
            _ACCEPTANCE.append(line)
            print(line)

    return run


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mock_backend_cmd():
    return [sys.executable, "-m", "algaeval.mock_backend"]
