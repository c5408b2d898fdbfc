import pytest

from rucmarket.case import load_sixbus
from rucmarket.market import clear_market, compare_with_traditional

HOUR21 = 20  # 0-based column of hour 21

_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def sixbus():
    return load_sixbus("robust")


@pytest.fixture(scope="session")
def robust_result(sixbus):
    return clear_market(sixbus)


@pytest.fixture(scope="session")
def comparison():
    return compare_with_traditional(load_sixbus("compare"))


@pytest.fixture
def criterion(request):
    """Records one PASS/FAIL line for an acceptance criterion; a test that
    errors before recording is reported as FAIL."""
    table = request.config.stash.setdefault(_CRITERIA, {})
    seen = []

    def record(number: int, passed: bool, detail: str) -> bool:
        table[number] = (bool(passed), detail)
        seen.append(number)
        print(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)

    yield record
    marker = request.node.get_closest_marker("criterion")
    if marker and not seen:
        table[marker.args[0]] = (False, "raised before the check completed")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_CRITERIA, {})
    if not table:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(table):
        passed, detail = table[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
