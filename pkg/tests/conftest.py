from collections import defaultdict

import numpy as np
import pytest

# acceptance checks append (criterion, passed, detail) here
ACCEPTANCE_LINES: list = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    grouped = defaultdict(list)
    for k, ok, detail in ACCEPTANCE_LINES:
        grouped[k].append((ok, detail))
    terminalreporter.section("acceptance criteria")
    for k in sorted(grouped):
        ok = all(o for o, _ in grouped[k])
        detail = "; ".join(("" if o else "FAILED ") + d for o, d in grouped[k])
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
