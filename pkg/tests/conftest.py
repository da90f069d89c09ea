import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from thirdgrade.basis import BasisSpec, build_basis  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def basis4():
    """Four-by-four truncation with alpha1 = 1 on its quartic grid."""
    return build_basis(BasisSpec(4, 4, 1.0))


def random_coeffs(rng, basis):
    return rng.standard_normal(len(basis)) / basis.lam


# one summary line per acceptance criterion, printed after the run
_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Collect measured values for the acceptance summary line of this test."""
    entry = _CRITERIA.setdefault(request.node.nodeid, {"name": request.node.name, "details": {}, "outcome": None})
    return entry["details"]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    entry = _CRITERIA.get(item.nodeid)
    if entry is not None and (rep.when == "call" or rep.failed):
        if entry["outcome"] != "FAIL":
            entry["outcome"] = "PASS" if rep.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for entry in _CRITERIA.values():
        details = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in entry["details"].items())
        terminalreporter.write_line(f"{entry['outcome'] or 'FAIL':4s}  {entry['name']}  {details}")
