import os
import sys
from fractions import Fraction

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from wow.measures import make_measure, make_nested  # noqa: E402

F = Fraction


def dirac(x):
    return make_measure([[F(x)]], [F(1)])


def unif(*xs):
    n = len(xs)
    return make_measure([[F(x)] for x in xs], [F(1, n)] * n)


@pytest.fixture
def crossed_pair():
    """M1 = 1/2 d(d0) + 1/2 d(d4), M2 = 1/2 d(d1) + 1/2 d(d3); outer costs [[1, 9], [9, 1]] at p = 2."""
    M1 = make_nested([dirac(0), dirac(4)], [F(1, 2), F(1, 2)])
    M2 = make_nested([dirac(1), dirac(3)], [F(1, 2), F(1, 2)])
    return M1, M2


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: (int(str(k).split()[0]), str(k))):
        terminalreporter.write_line(results[key])
