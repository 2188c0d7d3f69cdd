import pytest
from hypothesis import HealthCheck, settings

# One derandomized profile for the whole suite: property tests must behave
# the same on every run and machine, with no wall-clock deadline flakes.
settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def pytest_runtest_logreport(report):
    """Print one PASS/FAIL line per acceptance criterion."""
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        status = "PASS" if report.passed else "FAIL"
        print(f"\n[ACCEPTANCE] {status} {name}")
    elif report.when == "setup" and report.failed:
        print(f"\n[ACCEPTANCE] FAIL {name} (setup error)")


@pytest.fixture
def seed_catalog():
    from embercoach.domain import load_seed_catalog

    return load_seed_catalog()
