import numpy as np
import pytest

from traveltime.mesh import build_mesh

SQUARE_V = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
SQUARE_T = np.array([[0, 1, 2], [0, 2, 3]])


def square_tagger(mid, ends):
    return "dirichlet"


@pytest.fixture
def square():
    return build_mesh(SQUARE_V, SQUARE_T, square_tagger)


# Example I data on the unit square (all Dirichlet, K = I).
X0 = (0.1, 0.3)
T_EXACT = float(np.log((np.tan(1.0) + 1 / np.cos(1.0)) / (np.tan(0.3) + 1 / np.cos(0.3))))
ANTI_T = np.array([[0, 1, 3], [1, 2, 3]])


def head(x, y):
    return np.cos(x) - np.sin(y)


def smooth_problem(porosity=1.0):
    from traveltime.darcy_fem import Material, ProblemSpec
    return ProblemSpec({0: Material(np.eye(2), porosity)}, head, head,
                       {"dirichlet": "dirichlet"}, X0)


def smooth_velocity(x):
    x = np.asarray(x, dtype=float)
    return np.stack([np.sin(x[..., 0]), np.cos(x[..., 1])], axis=-1)


def smooth_jacobian(x):
    return np.array([[np.cos(x[0]), 0.0], [0.0, -np.sin(x[1])]])


def smooth_field():
    from traveltime.tracer import AnalyticField
    return AnalyticField(smooth_velocity, smooth_jacobian)


def anti_square(levels=0):
    from traveltime.mesh import uniform_refine
    return uniform_refine(build_mesh(SQUARE_V, ANTI_T, square_tagger), levels)


# Acceptance verdicts, filled by tests/test_acceptance.py and printed at the end.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
