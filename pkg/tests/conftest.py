import itertools

import pytest
from hypothesis import strategies as st

from threshold_lab.setfam import Family

_acceptance = {}


def brute_upset(F: Family):
    """Up-closure as a Python set of masks, by direct enumeration."""
    n = F.ground_size
    return {T for T in range(1 << n) if any(S & T == S for S in F.members)}


def brute_mu(F: Family, p: float) -> float:
    n = F.ground_size
    return sum(p ** bin(T).count("1") * (1 - p) ** (n - bin(T).count("1")) for T in brute_upset(F))


@st.composite
def families(draw, max_n=8, max_members=6, allow_empty_set=False):
    n = draw(st.integers(1, max_n))
    lo = 0 if allow_empty_set else 1
    masks = draw(st.lists(st.integers(lo, (1 << n) - 1), max_size=max_members))
    return Family(n, tuple(masks))


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance.items()):
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
