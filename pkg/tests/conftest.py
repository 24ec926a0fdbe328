import numpy as np
import pytest

from icd.boundaries import make_plan
from icd.data import ring_mixture
from icd.diffusion import DenoiserConfig, TeacherConfig, make_schedule, train_teacher
from icd.distill import CfgDistillConfig, DistillConfig, distill_cfg, train_icd
from icd.rng import stream

SMALL = DenoiserConfig(hidden=32, depth=2, time_dim=8, class_dim=4, guidance_dim=4)


@pytest.fixture(scope="session")
def mix():
    return ring_mixture()


@pytest.fixture(scope="session")
def sched():
    return make_schedule()


@pytest.fixture(scope="session")
def data(mix):
    return mix.sample(1024, stream(0, "tests", "data"))


@pytest.fixture(scope="session")
def small_teacher(data, sched):
    x, c = data
    den, _ = train_teacher(x, c, sched, TeacherConfig(steps=300, batch=128), SMALL)
    return den


@pytest.fixture(scope="session")
def small_guided(small_teacher, data):
    x, c = data
    st, _ = distill_cfg(small_teacher, x, c, CfgDistillConfig(steps=100, batch=128))
    return st


@pytest.fixture(scope="session")
def small_icd(small_guided, data, sched):
    x, c = data
    cfg = DistillConfig(steps=40, batch=64)
    return train_icd(small_guided, make_plan(sched.grid, 4, 0.7), x, c, cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n].line())
