"""Problem configuration files.

A configuration is a TOML document with the tables ``geometry``, ``mesh``,
``regions`` (array of tables), ``boundary``, ``source``, optional
``exact``, ``refinement`` and ``tracer``; see the shipped files in
``problems/data`` for complete examples.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from ..darcy_fem import Material, ProblemSpec
from ..errors import ConfigError
from ..mesh import build_mesh
from .expressions import Expression

SELF_CHECK_POINTS = 100
SELF_CHECK_TOL = 1e-10
_CSTEP = 1e-30


def _polygon_area(poly):
    p = np.asarray(poly, dtype=float)
    q = np.roll(p, -1, axis=0)
    return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def point_in_polygon(poly, pts):
    """Even-odd rule for an array of points (boundary points are undefined)."""
    poly = np.asarray(poly, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0:1], pts[:, 1:2]
    a = poly[None, :, :]
    b = np.roll(poly, -1, axis=0)[None, :, :]
    cond = (a[..., 1] > y) != (b[..., 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = a[..., 0] + (y - a[..., 1]) * (b[..., 0] - a[..., 0]) / (b[..., 1] - a[..., 1])
    return np.sum(cond & (x < xc), axis=1) % 2 == 1


@dataclass
class Region:
    id: int
    name: str
    polygon: list
    conductivity: list
    porosity: float
    provenance: str = ""


@dataclass
class ProblemConfig:
    """In-memory form of a configuration file (plain Python data only)."""

    name: str
    polygon: list
    edge_tags: list
    vertices: list
    triangles: list
    regions: list
    boundary: dict
    g_D: str
    f: str
    release_point: list
    constants: dict = field(default_factory=dict)
    exact: dict = field(default_factory=dict)
    refinement: dict = field(default_factory=dict)
    tracer: dict = field(default_factory=dict)
    description: str = ""

    # -- (de)serialization ----------------------------------------------------

    @classmethod
    def from_dict(cls, d):
        try:
            geo = d["geometry"]
            mesh = d["mesh"]
            regions = [Region(int(r["id"]), str(r.get("name", "")), _points(r["polygon"]),
                              _tensor(r["conductivity"]), float(r["porosity"]),
                              str(r.get("provenance", ""))) for r in d["regions"]]
            cfg = cls(
                name=str(d["name"]),
                description=str(d.get("description", "")),
                constants={k: float(v) for k, v in d.get("constants", {}).items()},
                polygon=_points(geo["polygon"]),
                edge_tags=[str(t) for t in geo["edge_tags"]],
                vertices=_points(mesh["vertices"]),
                triangles=[[int(i) for i in t] for t in mesh["triangles"]],
                regions=regions,
                boundary={"dirichlet": [str(t) for t in d["boundary"]["dirichlet"]]},
                g_D=str(d["boundary"]["g_D"]),
                f=str(d["source"]["f"]),
                release_point=[float(v) for v in d["release_point"]],
                exact={k: (v if isinstance(v, str) else [str(s) for s in v])
                       for k, v in d.get("exact", {}).items()},
                refinement=dict(d.get("refinement", {})),
                tracer={k: float(v) for k, v in d.get("tracer", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed configuration: {exc!r}") from exc
        cfg.validate()
        return cfg

    def to_dict(self):
        d = {"name": self.name}
        if self.description:
            d["description"] = self.description
        d["release_point"] = list(self.release_point)
        if self.constants:
            d["constants"] = dict(self.constants)
        d["geometry"] = {"polygon": self.polygon, "edge_tags": self.edge_tags}
        d["mesh"] = {"vertices": self.vertices, "triangles": self.triangles}
        d["regions"] = [{"id": r.id, "name": r.name, "polygon": r.polygon,
                         "conductivity": r.conductivity, "porosity": r.porosity,
                         "provenance": r.provenance} for r in self.regions]
        d["boundary"] = {"dirichlet": self.boundary["dirichlet"], "g_D": self.g_D}
        d["source"] = {"f": self.f}
        if self.exact:
            d["exact"] = dict(self.exact)
        if self.refinement:
            d["refinement"] = dict(self.refinement)
        if self.tracer:
            d["tracer"] = dict(self.tracer)
        return d

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    def digest(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    # -- validation -------------------------------------------------------------

    def expr(self, text):
        return Expression(text, self.constants)

    def validate(self):
        if len(self.edge_tags) != len(self.polygon):
            raise ConfigError("geometry needs one tag per polygon edge")
        if _polygon_area(self.polygon) <= 0:
            raise ConfigError("geometry polygon must be counter-clockwise")
        area = _polygon_area(self.polygon)
        ids = [r.id for r in self.regions]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate region ids")
        tiled = sum(abs(_polygon_area(r.polygon)) for r in self.regions)
        if abs(tiled - area) > 1e-9 * area:
            raise ConfigError(f"regions cover area {tiled}, geometry has {area}")
        for r in self.regions:
            Material(np.array(r.conductivity), r.porosity)  # raises on bad data
        unknown = set(self.boundary["dirichlet"]) - set(self.edge_tags)
        if unknown:
            raise ConfigError(f"Dirichlet tags {sorted(unknown)} do not appear in the geometry")
        for text in [self.g_D, self.f] + _exact_texts(self.exact):
            self.expr(text)
        if not point_in_polygon(self.polygon, [self.release_point])[0]:
            raise ConfigError("release point is not inside the domain")

    # -- construction of numerical objects --------------------------------------

    def boundary_tagger(self):
        poly = np.asarray(self.polygon, dtype=float)
        nxt = np.roll(poly, -1, axis=0)
        diam = float(np.ptp(poly, axis=0).max())

        def tagger(mid, ends=None):
            d = nxt - poly
            t = np.clip(np.einsum("ic,ic->i", mid - poly, d) / np.einsum("ic,ic->i", d, d), 0, 1)
            dist = np.linalg.norm(poly + t[:, None] * d - mid, axis=1)
            i = int(np.argmin(dist))
            return self.edge_tags[i] if dist[i] <= 1e-9 * diam else None

        return tagger

    def element_regions(self, centroids):
        region = -np.ones(len(centroids), dtype=np.int64)
        for r in self.regions:
            region[point_in_polygon(r.polygon, centroids)] = r.id
        if np.any(region < 0):
            raise ConfigError("some mesh elements lie in no region")
        return region

    def build_mesh(self):
        V = np.asarray(self.vertices, dtype=float)
        T = np.asarray(self.triangles, dtype=np.int64)
        centroids = V[T].mean(axis=1)
        return build_mesh(V, T, self.boundary_tagger(), self.element_regions(centroids))

    def problem_spec(self):
        materials = {r.id: Material(np.array(r.conductivity), r.porosity, r.provenance)
                     for r in self.regions}
        kinds = {t: ("dirichlet" if t in self.boundary["dirichlet"] else "neumann")
                 for t in self.edge_tags}
        return ProblemSpec(materials, self.expr(self.f), self.expr(self.g_D), kinds,
                           tuple(self.release_point), self.name)

    @property
    def exact_travel_time(self):
        if "T" not in self.exact:
            return None
        return float(self.expr(self.exact["T"])(0.0, 0.0))

    def exact_velocity(self):
        """Exact Darcy velocity as ``(func, jac)`` or None."""
        if "u" not in self.exact:
            return None
        ux, uy = (self.expr(s) for s in self.exact["u"])

        def func(x):
            x = np.asarray(x, dtype=float)
            return np.stack([ux(x[..., 0], x[..., 1]), uy(x[..., 0], x[..., 1])], axis=-1)

        def jac(x):
            x = np.asarray(x, dtype=float)
            rows = []
            for e in (ux, uy):
                rows.append(np.stack([_dx(e, x[..., 0], x[..., 1]), _dy(e, x[..., 0], x[..., 1])],
                                     axis=-1))
            return np.stack(rows, axis=-2)

        return func, jac

    def self_check(self, seed=0):
        """Check ``div u = f``, ``u = -K grad p`` and ``p = g_D`` on Dirichlet edges.

        Uses seeded random points and complex-step derivatives. Returns the
        largest scaled defect; raises :class:`ConfigError` above the tolerance.
        """
        if "u" not in self.exact or "p" not in self.exact:
            return 0.0
        rng = np.random.default_rng(seed)
        poly = np.asarray(self.polygon, dtype=float)
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        pts = np.empty((0, 2))
        while len(pts) < SELF_CHECK_POINTS:
            cand = lo + (hi - lo) * rng.random((4 * SELF_CHECK_POINTS, 2))
            pts = np.vstack([pts, cand[point_in_polygon(poly, cand)]])
        pts = pts[:SELF_CHECK_POINTS]
        x, y = pts[:, 0], pts[:, 1]
        ux, uy = (self.expr(s) for s in self.exact["u"])
        p = self.expr(self.exact["p"])
        f = self.expr(self.f)
        u = np.stack([ux(x, y), uy(x, y)], axis=-1)
        scale = max(1.0, float(np.abs(u).max()))
        worst = float(np.max(np.abs(_dx(ux, x, y) + _dy(uy, x, y) - f(x, y)))) / scale
        grad_p = np.stack([_dx(p, x, y), _dy(p, x, y)], axis=-1)
        K = np.empty((len(pts), 2, 2))
        for r in self.regions:
            K[point_in_polygon(r.polygon, pts)] = np.array(r.conductivity)
        darcy = u + np.einsum("ncd,nd->nc", K, grad_p)
        worst = max(worst, float(np.abs(darcy).max()) / scale)
        g = self.expr(self.g_D)
        nxt = np.roll(poly, -1, axis=0)
        s = rng.random(10)
        for i, tag in enumerate(self.edge_tags):
            if tag in self.boundary["dirichlet"]:
                q = poly[i] + s[:, None] * (nxt[i] - poly[i])
                pv = p(q[:, 0], q[:, 1])
                worst = max(worst, float(np.abs(pv - g(q[:, 0], q[:, 1])).max())
                            / max(1.0, float(np.abs(pv).max())))
        if worst > SELF_CHECK_TOL:
            raise ConfigError(f"exact solution fails the self-check (defect {worst:.3e})")
        return worst


def _dx(e, x, y):
    return np.imag(e(np.asarray(x) + 1j * _CSTEP, np.asarray(y) + 0j)) / _CSTEP


def _dy(e, x, y):
    return np.imag(e(np.asarray(x) + 0j, np.asarray(y) + 1j * _CSTEP)) / _CSTEP


def _points(seq):
    return [[float(v) for v in p] for p in seq]


def _tensor(K):
    if isinstance(K, (int, float)):
        return [[float(K), 0.0], [0.0, float(K)]]
    return [[float(v) for v in row] for row in K]


def _exact_texts(exact):
    out = []
    for v in exact.values():
        out += [v] if isinstance(v, str) else list(v)
    return out


def loads(text):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return ProblemConfig.from_dict(data)


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file {str(path)!r} not found")
    return loads(path.read_text())


def dump_config(cfg, path):
    Path(path).write_text(cfg.dumps())
