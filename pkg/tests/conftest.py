import sys
from pathlib import Path

import numpy as np
import pytest

from unclip.corpus import synth_tones

DATA = Path(__file__).parent / "data"
sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        secs = f"{call.duration:.1f}s" if call is not None else ""
        _CRITERIA[number] = (title, f"{status} {secs}".strip())


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {status:<12} {title}")


@pytest.fixture(scope="session")
def tone_dir(tmp_path_factory):
    """Twenty deterministic clean tone clips shared by the corpus-level tests."""
    out = tmp_path_factory.mktemp("tones")
    synth_tones(out, 20, seed=0)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
