import numpy as np
import pytest

from lemp.graph import build_graph


def random_graph(n, p, rng, classes=2, split=True):
    """Erdos-Renyi graph with random labels and a random split."""
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    labels = rng.integers(0, classes, n)
    splits = rng.choice(["train", "val", "test"], n) if split else None
    if split:
        splits[:classes] = "train"
        labels[:classes] = np.arange(classes)
    return build_graph(edges, n, labels, splits)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Store one status line per acceptance criterion; ``passed=None`` marks a skip."""

    def record(number, passed, detail):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {number:>2}: {status}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
