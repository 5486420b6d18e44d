import numpy as np
import pytest

from bubbling.bsystem import solve_heights
from bubbling.bubble import compute_constants
from bubbling.green import BallDomain, interaction_matrix
from bubbling.linop import negative_eigenpair


@pytest.fixture(scope="session", params=[5, 6, 7])
def dim(request):
    return compute_constants(request.param)


@pytest.fixture(scope="session")
def dim5():
    return compute_constants(5)


@pytest.fixture(scope="session")
def eig5(dim5):
    return negative_eigenpair(dim5, check_truncation=False)


@pytest.fixture(scope="session")
def two_points():
    """A positive definite k=2 configuration in the unit 5-ball."""
    dom = BallDomain(5)
    q = np.array([[0.5, 0, 0, 0, 0], [-0.3, 0.4, 0, 0, 0]], dtype=float)
    gm = interaction_matrix(dom, q)
    return gm, solve_heights(gm)


def random_interior(rng, k, n, rmin=0.05, rmax=0.95):
    q = rng.normal(size=(k, n))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return q * rng.uniform(rmin, rmax, size=(k, 1))


ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the verdict is PASS only if the test body completes."""
    key = request.node.name.removeprefix("test_")
    ACCEPTANCE[key] = ["FAIL", ""]

    def note(detail):
        ACCEPTANCE[key][1] = detail

    yield note
    rep = getattr(request.node, "rep_call", None)
    if rep is not None and rep.passed:
        ACCEPTANCE[key][0] = "PASS"
    line = f"{key}: {ACCEPTANCE[key][0]}  {ACCEPTANCE[key][1]}"
    print("\n" + line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda s: int(s.split("_")[1])):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {status}  {detail}")
