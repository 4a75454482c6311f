import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fairselect import build_model, standin_model  # noqa: E402


def pytest_addoption(parser):
    parser.addoption(
        "--fico-dir",
        default=os.environ.get("FAIRSELECT_FICO_DIR"),
        help="directory holding transrisk_cdf_by_race_ssa.csv and transrisk_performance_by_race_ssa.csv",
    )


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one result line per acceptance criterion.

    Call as ``acceptance(number, ok, detail)``; ``ok=None`` marks a skip.
    The lines are printed in the terminal summary.
    """

    def record(number, ok, detail):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        _ACCEPTANCE[number] = f"criterion {number:>2}: {status}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])


@pytest.fixture
def fico_dir(request):
    path = request.config.getoption("--fico-dir")
    if not path:
        pytest.skip("credit score tables not supplied (--fico-dir)")
    return path


@pytest.fixture
def hand_model():
    """Three levels, small enough to check by hand."""
    return build_model(
        [0.0, 0.5, 1.0],
        0.4,
        [0.5, 0.7],
        {
            (0, 0): [0.5, 0.3, 0.2],
            (0, 1): [0.2, 0.3, 0.5],
            (1, 0): [0.6, 0.3, 0.1],
            (1, 1): [0.1, 0.6, 0.3],
        },
    )


@pytest.fixture
def standin():
    return standin_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
