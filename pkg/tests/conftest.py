import numpy as np
import pytest

_criteria: dict[int, str] = {}
_details: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    num = props.get("criterion")
    if num is None:
        return
    # One failing test fails the whole criterion.
    if _criteria.get(num) != "FAIL":
        _criteria[num] = "PASS" if report.passed else "FAIL"
    _details.setdefault(num, []).extend(v for k, v in report.user_properties if k == "detail")


@pytest.fixture(autouse=True)
def _tag_criterion(request):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        request.node.user_properties.append(("criterion", marker.args[0]))


@pytest.fixture
def detail(request):
    """Attach a line of measured values to the acceptance summary."""
    def add(text: str) -> None:
        request.node.user_properties.append(("detail", text))
    return add


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        terminalreporter.write_line(f"criterion {num:2d}: {_criteria[num]}")
        for line in _details.get(num, []):
            terminalreporter.write_line(f"    {line}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
