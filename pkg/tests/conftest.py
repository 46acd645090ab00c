import numpy as np
import pytest

from pucci_serrin import grid, radial
from pucci_serrin.geometry import SpaceForm
from pucci_serrin.pucci import PucciParams

ACCEPTANCE_LINES = []

BALL_PARAMS = PucciParams(1.0, 1.1)
BALL_CENTER = (0.0, 1.0)
BALL_R = 0.5
BALL_H = 1.0 / 64


@pytest.fixture(scope="session")
def hyper_ball():
    """Hyperbolic geodesic ball solve (lambda=1, Lambda=1.1, f=1, R=0.5, h=1/64)."""
    dom = grid.build_geodesic_ball(BALL_CENTER, BALL_R, BALL_H)
    u = grid.howard_solve(dom, BALL_PARAMS, (1.0, 0.0))
    return dom, u


@pytest.fixture(scope="session")
def hyper_radial():
    return radial.shoot(radial.RadialProblem(SpaceForm.hyperbolic(2), BALL_R, BALL_PARAMS))


@pytest.fixture(scope="session")
def hyper_ellipse():
    dom = grid.build_ellipse(BALL_CENTER, 0.5, 0.25, BALL_H)
    u = grid.howard_solve(dom, BALL_PARAMS, (1.0, 0.0))
    return dom, u


def half_plane_rho(dom, center=BALL_CENTER):
    X1, X2 = dom.coords()
    return grid._half_plane_distance(np.stack([X1, X2], axis=-1), np.asarray(center))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
