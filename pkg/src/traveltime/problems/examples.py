"""The shipped problems.

Each ``make_*`` function builds a configuration programmatically; the TOML
files in ``data/`` are written from them (``python -m
traveltime.problems.examples``) and the ``example_*`` loaders read the files,
so a user-edited file is what actually runs.
"""

from importlib import resources

import numpy as np

from .config import ProblemConfig, Region, loads

UNIT_SQUARE = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
SQUARE_TAGS = ["bottom", "right", "top", "left"]
HYDROSTATIC = {"p_atm": 1.013e5, "rho_g": 9.81e3}


def _iso(k):
    return [[float(k), 0.0], [0.0, float(k)]]


def make_example_I(crossed=False):
    if crossed:
        vertices = UNIT_SQUARE + [[0.5, 0.5]]
        triangles = [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]]
    else:
        vertices = UNIT_SQUARE
        triangles = [[0, 1, 3], [1, 2, 3]]
    return ProblemConfig(
        name="example_I_crossed" if crossed else "example_I",
        description="Smooth manufactured flow on the unit square with a known travel time.",
        polygon=UNIT_SQUARE, edge_tags=SQUARE_TAGS,
        vertices=vertices, triangles=triangles,
        regions=[Region(0, "uniform", UNIT_SQUARE, _iso(1.0), 1.0, "manufactured")],
        boundary={"dirichlet": list(SQUARE_TAGS)},
        g_D="cos(x) - sin(y)", f="cos(x) - sin(y)",
        release_point=[0.1, 0.3],
        exact={"u": ["sin(x)", "cos(y)"], "p": "cos(x) - sin(y)",
               "T": "log((tan(1) + 1/cos(1)) / (tan(0.3) + 1/cos(0.3)))"},
        refinement={"mode": "uniform", "fraction": 0.1, "max_iters": 6 if crossed else 7, "max_dofs": 200000},
        tracer={"t_max": 100.0},
    )


def make_affine():
    """Affine head with an anisotropic tensor: reproduced exactly by the lowest order."""
    K = [[2.0, 0.5], [0.5, 1.0]]
    return ProblemConfig(
        name="manufactured_affine",
        description="Affine head, constant velocity (patch test).",
        polygon=UNIT_SQUARE, edge_tags=SQUARE_TAGS,
        vertices=UNIT_SQUARE, triangles=[[0, 1, 3], [1, 2, 3]],
        regions=[Region(0, "uniform", UNIT_SQUARE, K, 1.0, "manufactured")],
        boundary={"dirichlet": list(SQUARE_TAGS)},
        g_D="1 + x + 2*y", f="0",
        release_point=[0.9, 0.6],
        exact={"u": ["-3", "-2.5"], "p": "1 + x + 2*y", "T": "0.24"},
        refinement={"mode": "uniform", "fraction": 0.1, "max_iters": 3, "max_dofs": 20000},
        tracer={"t_max": 10.0},
    )


def make_example_II():
    # trapezoid y + x/10 < 1 split along y = 1/2
    polygon = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [1.0, 0.9], [0.0, 1.0], [0.0, 0.5]]
    tags = ["bottom", "right", "right", "top", "left", "left"]
    vertices = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.0, 0.5], [1.0, 0.9], [0.0, 1.0]]
    # bottom diagonal (1,0)-(0,1/2) keeps the release point off the edges
    triangles = [[0, 1, 3], [1, 2, 3], [3, 2, 4], [3, 4, 5]]
    top = [[0.0, 0.5], [1.0, 0.5], [1.0, 0.9], [0.0, 1.0]]
    bottom = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.0, 0.5]]
    return ProblemConfig(
        name="example_II",
        description="Two sandstone layers under a sloping top surface; flow driven by the "
                    "hydrostatic head on top, no flow elsewhere.",
        constants=dict(HYDROSTATIC),
        polygon=polygon, edge_tags=tags, vertices=vertices, triangles=triangles,
        regions=[
            Region(0, "bottom (St Bees sandstone-like)", bottom, _iso(1.0), 0.15, "placeholder"),
            Region(1, "top (Calder sandstone-like)", top, _iso(10.0), 0.2, "placeholder"),
        ],
        boundary={"dirichlet": ["top"]},
        g_D="p_atm/rho_g + y", f="0",
        release_point=[0.1, 0.1],
        refinement={"mode": "adaptive", "fraction": 0.1, "max_iters": 14, "max_dofs": 40000},
        tracer={"t_max": 1.0e4},
    )


def _layered_geometry():
    xs = np.linspace(0.0, 10000.0, 21)
    top = 140.0 - 0.01 * xs + 15.0 * np.sin(2 * np.pi * xs / 4000.0)
    levels = [np.round(top, 3)]
    for d in (-150.0, -400.0, -600.0, -850.0, -1100.0):
        levels.append(np.round(d - 0.02 * (xs - 5000.0), 3))
    levels.append(np.full_like(xs, -1500.0))
    return xs, levels


def make_example_III():
    xs, levels = _layered_geometry()
    nx, nl = len(xs), len(levels)
    vid = lambda l, j: l * nx + j  # noqa: E731
    vertices = [[float(xs[j]), float(levels[l][j])] for l in range(nl) for j in range(nx)]
    triangles = []
    for l in range(nl - 1):
        for j in range(nx - 1):
            a, b = vid(l + 1, j), vid(l + 1, j + 1)
            c, d = vid(l, j + 1), vid(l, j)
            triangles += [[a, b, c], [a, c, d]]
    bottom = [vertices[vid(nl - 1, j)] for j in range(nx)]
    right = [vertices[vid(l, nx - 1)] for l in range(nl - 2, -1, -1)]
    top = [vertices[vid(0, j)] for j in range(nx - 2, -1, -1)]
    left = [vertices[vid(l, 0)] for l in range(1, nl - 1)]
    polygon = bottom + right + top + left
    tags = (["bottom"] * (nx - 1) + ["right"] * (nl - 1) + ["top"] * (nx - 1)
            + ["left"] * (nl - 1))
    names = ["Calder sandstone-like", "St Bees sandstone-like", "Brockram-like",
             "Collyhurst sandstone-like", "Carboniferous limestone-like",
             "Borrowdale volcanic basement-like"]
    K = [30.0, 10.0, 3.0, 5.0, 1.0, 1.0e-3]
    phi = [0.2, 0.15, 0.1, 0.12, 0.05, 0.005]
    regions = []
    for l in range(nl - 1):
        poly = ([vertices[vid(l + 1, j)] for j in range(nx)]
                + [vertices[vid(l, j)] for j in range(nx - 1, -1, -1)])
        regions.append(Region(l, names[l], poly, _iso(K[l]), phi[l], "placeholder"))
    return ProblemConfig(
        name="example_III",
        description="Six dipping layers under a 10 km topographic section (metres, years). "
                    "Geometry and rock data are illustrative placeholders.",
        constants=dict(HYDROSTATIC),
        polygon=polygon, edge_tags=tags, vertices=vertices, triangles=triangles,
        regions=regions,
        boundary={"dirichlet": ["top"]},
        g_D="p_atm/rho_g + y", f="0",
        release_point=[3000.0, -700.0],
        refinement={"mode": "adaptive", "fraction": 0.1, "max_iters": 6, "max_dofs": 60000},
        tracer={"t_max": 1.0e8},
    )


BUILDERS = {
    "example_I": make_example_I,
    "example_I_crossed": lambda: make_example_I(crossed=True),
    "example_II": make_example_II,
    "example_III": make_example_III,
    "manufactured_affine": make_affine,
}


def shipped(name):
    """Load a shipped configuration by name."""
    text = resources.files("traveltime.problems").joinpath("data", f"{name}.toml").read_text()
    return loads(text)


def example_I():
    return shipped("example_I")


def example_II():
    return shipped("example_II")


def example_III():
    return shipped("example_III")


def write_data(directory=None):
    from pathlib import Path
    directory = Path(directory or Path(__file__).parent / "data")
    directory.mkdir(exist_ok=True)
    for name, build in BUILDERS.items():
        (directory / f"{name}.toml").write_text(build().dumps())


if __name__ == "__main__":
    write_data()
