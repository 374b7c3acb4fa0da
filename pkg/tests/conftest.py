import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_class_dirs(root: Path, counts: dict) -> Path:
    """Create empty placeholder image files: enough for listing/splitting, not decoding."""
    for name, n in counts.items():
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            (d / f"{i:04d}.png").touch()
    return root


@pytest.fixture
def class_dirs(tmp_path):
    def _make(counts):
        return make_class_dirs(tmp_path / "data", counts)
    return _make


# -- acceptance summary -------------------------------------------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    name = getattr(report, "criterion", None)
    if name is not None and (report.when == "call" or report.outcome != "passed"):
        _CRITERIA.setdefault(name, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _CRITERIA.items():
        if "failed" in outcomes:
            status = "FAIL"
        elif "passed" in outcomes:
            status = "PASS"
        else:
            status = "SKIP"
        terminalreporter.write_line(f"{status}  {name}")
