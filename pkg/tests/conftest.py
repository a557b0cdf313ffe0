import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from boltz1d.kernel import SphereQuadrature, canonical_kernel
from boltz1d.state import MaxwellianSpec, PhaseGrid, maxwellian_state

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

QUAD = SphereQuadrature(4, 4)

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def torus():
    return PhaseGrid("torus", 1.0, 4, 4.0, 6)


@pytest.fixture
def line():
    return PhaseGrid("line", 4.0, 16, 4.0, 6)


@pytest.fixture(scope="session")
def kernel():
    return canonical_kernel(1.0, 1.0, 0.5)


@pytest.fixture
def maxwellian(torus):
    return maxwellian_state(MaxwellianSpec(1.0, (0.0, 0.0, 0.0), 1.0), torus)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
