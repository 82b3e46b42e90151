import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def disk25():
    from lc_homog.geometry import ObstacleShape
    return ObstacleShape.disk(0.25)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the verdict so the test can assert it."""
    def report(number, name, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip()
        _CRITERIA.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
