import numpy as np
import pytest
from hypothesis import settings

from crashml.data_model import aggregate_sections, make_dataset
from crashml.synthetic import generate_synthetic

settings.register_profile("default", max_examples=60, deadline=None)
settings.register_profile("fast", max_examples=10, deadline=None)
settings.load_profile("default")

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0][2:].split()[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def record_criterion():
    def record(name, ok, detail=""):
        ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
    return record


@pytest.fixture(scope="session")
def small_sections():
    return aggregate_sections(generate_synthetic(120, seed=7, years=3))


@pytest.fixture(scope="session")
def small_rate_data(small_sections):
    return make_dataset(small_sections, "rate")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
