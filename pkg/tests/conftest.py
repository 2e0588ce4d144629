from pathlib import Path

import numpy as np
import pytest

from proxychain.topology import build_full_mesh, random_connected_graph

DATA = Path(__file__).resolve().parent.parent / "data"

# Acceptance results, filled in by test_acceptance.py and echoed at the end.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def random_mesh(seed: int, n: int | None = None, lo: int = 2, hi: int = 8, **kw):
    rng = np.random.default_rng(seed)
    if n is None:
        n = int(rng.integers(lo, hi + 1))
    return build_full_mesh(random_connected_graph(n, rng, **kw))


@pytest.fixture
def data_dir() -> Path:
    return DATA


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
