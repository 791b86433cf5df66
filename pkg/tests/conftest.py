import pytest

from kforge.immersion import ImmersionMap
from kforge.profile import ProfileParams, assemble_profile

ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def sol():
    return assemble_profile(ProfileParams())


@pytest.fixture(scope="session")
def sol3():
    return assemble_profile(ProfileParams(n=3, k=2))


@pytest.fixture(scope="session")
def base(sol):
    return ImmersionMap(sol)


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
