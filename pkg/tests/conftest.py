import warnings

import numpy as np
import pytest

from blowup_lab.assembler import build_approximate_solution
from blowup_lab.geometry import BlowupParams, SphereField

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    lines = request.config.stash[ACCEPTANCE_KEY]

    def log(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        print(line)

    return log


def make_params(N: int = 1, **kw) -> BlowupParams:
    base = dict(nu=1.5, alpha0=0.7, delta=0.2, order_N=N)
    base.update(kw)
    return BlowupParams(**base)


def random_smooth_field(grid, coef, m=1):
    """Polar angle starting at the south pole, plus a slowly varying azimuth."""
    r = grid.nodes
    s = r / (1.0 + r)
    theta = np.pi * (1.0 - s) + sum(c * np.sin((k + 1) * np.pi * s) for k, c in enumerate(coef[:4]))
    psi = sum(c * s ** (k + 1) for k, c in enumerate(coef[4:]))
    v = np.column_stack([np.sin(theta) * np.cos(psi), np.sin(theta) * np.sin(psi), np.cos(theta)])
    v[0] = [0.0, 0.0, -1.0]
    return SphereField(grid, v, m)


@pytest.fixture(scope="session")
def params1():
    return make_params(1)


@pytest.fixture(scope="session")
def params2():
    return make_params(2)


@pytest.fixture(scope="session")
def sol1(params1):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return build_approximate_solution(params1)


@pytest.fixture(scope="session")
def sol2(params2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return build_approximate_solution(params2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
