import sys

import pytest

from spectra_lab.geometry import gauss_model
from spectra_lab.spectra import cf_sum
from spectra_lab.symbolic import TransitionSystem


@pytest.fixture(scope="session")
def ts12():
    return TransitionSystem.full((1, 2))


@pytest.fixture(scope="session")
def gauss12():
    return gauss_model((1, 2))


@pytest.fixture(scope="session")
def pot():
    return cf_sum()


@pytest.fixture(scope="session")
def golden():
    return TransitionSystem.from_forbidden((1, 2), [(2, 2)])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
