import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mgcn.kg import Triple  # noqa: E402


def random_triples(rng, max_nodes=12, max_triples=20, n_predicates=3):
    n_nodes = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, max_triples + 1))
    nodes = [f"n{i}" for i in range(n_nodes)]
    out = []
    for _ in range(m):
        s, o = rng.choice(n_nodes, size=2, replace=True)
        out.append(Triple(nodes[s], f"p{int(rng.integers(n_predicates))}", nodes[o]))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        status, title, note = RESULTS[number]
        line = f"[{status}] criterion {number}: {title}"
        terminalreporter.write_line(line + (f" ({note})" if note else ""))
