import pytest

from pxlog.barrier import construct_box
from pxlog.exponent import ExponentField
from pxlog.fields import Flavor, SystemParams
from pxlog.mesh import build_interval_mesh


def make_params(mesh, p=3.0, q=3.0, alpha=0.5, beta=0.5, gamma=1.0, theta=1.0, flavor=Flavor.PLAIN):
    ex = {k: ExponentField.from_spec(mesh, v) for k, v in dict(p=p, q=q, alpha=alpha, beta=beta).items()}
    return SystemParams(gamma, theta, flavor=flavor, **ex)


@pytest.fixture(scope="session")
def regime_i_small():
    """Regime (i) scenario on a 17-node mesh with its certified box."""
    params = make_params(build_interval_mesh(0.0, 1.0, 16))
    box, bp = construct_box(params, "i", 0.5)
    return params, box, bp


@pytest.fixture(scope="session")
def regime_i():
    params = make_params(build_interval_mesh(0.0, 1.0, 128))
    box, bp = construct_box(params, "i", 0.5)
    return params, box, bp


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
