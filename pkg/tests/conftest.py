import numpy as np
import pytest

from tieq.model import OgEconomy
from tieq import ogsolver as og


@pytest.fixture(scope="session")
def econ():
    return OgEconomy.make()


@pytest.fixture(scope="session")
def interval(econ):
    return og.steady_state_interval(econ)


@pytest.fixture(scope="session")
def solved(econ, interval):
    # pairs at the 25/50/75% points of I, shared by several test modules
    out = {}
    for frac in (0.25, 0.5, 0.75):
        kb = interval.at(frac)
        out[frac] = og.solve_value_pair(econ, kb)
    return out


@pytest.fixture(scope="session")
def tc_solved(econ):
    e = econ.with_(rho=econ.delta)
    return e, og.solve_value_pair(e)


def pytest_configure(config):
    config._criteria_lines = []


@pytest.fixture
def criterion(request):
    """report(name, checks, seconds=None, limit=None): print one PASS/FAIL line
    and fail the test if any check (or the time limit) fails."""
    lines = request.config._criteria_lines

    def report(name, checks, seconds=None, limit=None):
        checks = dict(checks)
        if limit is not None:
            checks[f"runtime {seconds:.1f}s < {limit:g}s"] = seconds < limit
        bad = [k for k, ok in checks.items() if not ok]
        line = f"{name}: {'PASS' if not bad else 'FAIL'}"
        if bad:
            line += "  [failed: " + "; ".join(bad) + "]"
        lines.append(line)
        print(line)
        assert not bad, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criteria_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
