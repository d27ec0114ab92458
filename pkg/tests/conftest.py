import warnings

import pytest

from fracdarcy.mesh import build_bundle
from fracdarcy.model import CompatibilityWarning, make_case
from fracdarcy.study import make_scheme


@pytest.fixture(scope="session")
def hex4():
    return build_bundle("cartesian", 4)


@pytest.fixture(scope="session")
def hex8():
    return build_bundle("cartesian", 8)


@pytest.fixture(scope="session")
def tet4():
    return build_bundle("tetrahedral", 4)


@pytest.fixture(scope="session")
def iso():
    return make_case("isotropic")


@pytest.fixture(scope="session")
def aniso():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CompatibilityWarning)
        return make_case("anisotropic")


@pytest.fixture(scope="session", params=[
    ("cartesian", "vag-fe"), ("cartesian", "vag-cv"), ("cartesian", "hfv"),
    ("tetrahedral", "vag-fe"), ("tetrahedral", "hfv")],
    ids=lambda p: f"{p[0]}-{p[1]}")
def small_scheme(request, hex4, tet4):
    """Every scheme on a 4-cell-per-axis mesh, with xi away from 1."""
    bundle = hex4 if request.param[0] == "cartesian" else tet4
    case = make_case("isotropic", xi=0.8)
    return make_scheme(request.param[1], bundle, case.data)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


class AcceptanceLog:
    """Collects pass/fail checks per criterion for the terminal summary."""

    def __init__(self):
        self.checks = {}

    def record(self, criterion, ok, detail):
        self.checks.setdefault(criterion, []).append((bool(ok), detail))
        return ok

    def note(self, criterion, detail):
        # informational line, never affects the verdict
        self.checks.setdefault(criterion, []).append((None, detail))


@pytest.fixture(scope="session")
def acceptance(request):
    log = AcceptanceLog()
    request.config.stash[ACCEPTANCE_KEY] = log
    return log


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(ACCEPTANCE_KEY, None)
    if log is None or not log.checks:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(log.checks):
        checks = log.checks[criterion]
        verdict = "PASS" if all(ok is not False for ok, _ in checks) else "FAIL"
        terminalreporter.write_line(f"{verdict} criterion {criterion}")
        for ok, detail in checks:
            mark = {True: "ok  ", False: "FAIL", None: "info"}[ok]
            terminalreporter.write_line(f"    {mark} {detail}")
