import numpy as np
import pytest
from hypothesis import strategies as st

from topoclass.imaging import GrayImage


def random_image(rng, shape=(16, 16), levels=8):
    """Intensities from a small set of levels spread over [0, 255]."""
    palette = np.linspace(0, 255, levels).round().astype(int)
    return GrayImage(palette[rng.integers(0, levels, size=shape)])


@st.composite
def small_images(draw, max_side=6, max_value=255):
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    vals = draw(st.lists(st.integers(0, max_value), min_size=h * w, max_size=h * w))
    return GrayImage(np.array(vals).reshape(h, w))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_criteria = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    num = int(name.split("_")[2])
    if report.when == "call" or report.failed or report.skipped:
        if report.failed:
            _criteria[num] = "FAIL"
        elif report.skipped:
            _criteria.setdefault(num, "SKIP")
        else:
            _criteria.setdefault(num, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        terminalreporter.write_line(f"criterion {num:2d}: {_criteria[num]}")
