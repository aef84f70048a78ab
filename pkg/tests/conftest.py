import itertools

import numpy as np
import pytest

from relflow import CellSet, FiniteRelation, GridSpace


def line(n: int) -> GridSpace:
    """A 1-D grid of ``n`` unit cells, used as a finite discrete space."""
    return GridSpace(((0.0, float(n)),), (n,))


def rel(n: int, pairs) -> FiniteRelation:
    return FiniteRelation.from_pairs(line(n), pairs)


def cells(space: GridSpace, idx) -> CellSet:
    return CellSet.from_indices(space, idx)


def random_relation(rng, space: GridSpace, density: float) -> FiniteRelation:
    m = rng.random((space.n_cells, space.n_cells)) < density
    s, d = np.nonzero(m)
    return FiniteRelation(space, s, d)


def random_set(rng, space: GridSpace, density: float = 0.5) -> CellSet:
    return CellSet(space, rng.random(space.n_cells) < density)


def subsets(n: int):
    for bits in range(1 << n):
        yield [k for k in range(n) if bits >> k & 1]


def box_gap(alo, ahi, blo, bhi, metric):
    gap = np.maximum(0.0, np.maximum(np.asarray(alo) - bhi, np.asarray(blo) - ahi))
    return float(np.sqrt((gap ** 2).sum())) if metric == "euclidean" else float(gap.max())


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


# acceptance summary: one line per criterion after the run

_ACCEPTANCE: dict[str, tuple[str, float]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = (report.outcome, report.duration)
    elif "test_acceptance.py" in report.nodeid and report.when == "setup" and report.outcome != "passed":
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        outcome, dur = _ACCEPTANCE[name]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  ({dur:.2f} s)")
