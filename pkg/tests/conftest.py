import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion, ok, detail=""):
    """Store and print the verdict of one acceptance criterion."""
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[criterion]
        terminalreporter.write_line(f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
