import numpy as np
import pytest

from aircrab.allocation import FeasibleSets, Mixer
from aircrab.core import RobotParams


@pytest.fixture
def params():
    return RobotParams()


@pytest.fixture
def mixer(params):
    return Mixer.from_params(params)


@pytest.fixture
def sets(params):
    return FeasibleSets.from_params(params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng) -> np.ndarray:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@pytest.fixture(scope="session")
def default_mission():
    from aircrab.mission import MissionConfig, mission_pick_place
    return mission_pick_place(MissionConfig())


# --- acceptance reporting ------------------------------------------------------
# Tests marked ``criterion(n, title)`` get one PASS/FAIL line in the terminal
# summary; ``record_detail`` attaches the measured numbers to that line.

_CRITERIA: dict = {}


@pytest.fixture
def record_detail(request):
    def record(text: str) -> None:
        request.node.user_properties.append(("detail", text))
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    prev = _CRITERIA.get(n)
    passed = rep.passed and (prev is None or prev[1])
    parts = [d for d in ((prev[2] if prev else ""), detail) if d]
    _CRITERIA[n] = (title, passed, "; ".join(parts))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[n]
        line = f"{'PASS' if passed else 'FAIL'}  {n:2d}. {title}"
        tr.write_line(line + (f"  [{detail}]" if detail else ""))
