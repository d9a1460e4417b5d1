"""Particle tracing through a triangulation.

Two propagation paths exist:

* piecewise-affine fields (lowest-order discrete velocities) use the exact
  in-element flow map ``X(t) = x_e + Phi(t) v_e`` with
  ``Phi(t) = int_0^t exp(G s) ds`` and ``v_e = a + G x_e``; edge crossings
  are roots of the signed edge distances along this map;
* everything else (analytic fields, higher-order discrete fields) uses an
  embedded Runge-Kutta 5(4) integrator with one terminal event per edge.

In both cases the path is recorded element by element so the adjoint solver
can walk it backwards.
"""

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import (BudgetExceededError, RecirculationError, StagnationError,
                     TangentialExitError, VertexPassageError)
from .linalg2x2 import expm_flow, phi_flow
from .mesh import containing_elements
from .vtk import write_polyline

VERTEX_TOL = 1e-10
TANGENTIAL_TOL = 1e-12
STAGNATION_TOL = 1e-14
RK_RTOL = 1e-12
INTERNAL_CAP = 1e4  # in-element time cap in units of h/|u(entry)|
MAX_SEGMENTS = 200000
_GRID_RATIO = 2.0 ** 0.25
_CHUNK = 16


# --------------------------------------------------------------------------
# velocity fields


class VelocityField:
    """Velocity that can be evaluated element by element.

    Subclasses provide ``velocity(e, x)`` and ``gradient(e, x)``; ``affine``
    is either None or a pair ``(a, G)`` of per-element arrays with
    ``u = a[e] + G[e] @ x`` on element ``e``.
    """

    affine = None
    time_dependent = False

    def velocity(self, e, x, t=0.0):
        raise NotImplementedError

    def gradient(self, e, x, t=0.0):
        raise NotImplementedError

    def scale(self, mesh):
        """Typical speed, used for relative tolerances."""
        c = mesh.centroid
        return float(max(np.linalg.norm(self.velocity(e, c[e])) for e in range(mesh.n_elements)))


class AnalyticField(VelocityField):
    """Closed-form velocity ``func(x)`` (or ``func(x, t)``) with Jacobian ``jac``.

    ``func`` maps an array of shape (..., 2) to (..., 2); ``jac`` returns
    ``d u_c / d x_d`` with shape (..., 2, 2). The Jacobian falls back to
    central differences if omitted.
    """

    def __init__(self, func, jac=None, time_dependent=False):
        self.func = func
        self.jac = jac
        self.time_dependent = time_dependent

    def _call(self, f, x, t):
        x = np.asarray(x, dtype=float)
        return f(x, t) if self.time_dependent else f(x)

    def velocity(self, e, x, t=0.0):
        return np.asarray(self._call(self.func, x, t), dtype=float)

    def gradient(self, e, x, t=0.0):
        if self.jac is not None:
            return np.asarray(self._call(self.jac, x, t), dtype=float)
        x = np.asarray(x, dtype=float)
        d = 1e-6 * max(1.0, float(np.abs(x).max()))
        cols = []
        for k in range(2):
            dx = np.zeros(2)
            dx[k] = d
            cols.append((self.velocity(e, x + dx, t) - self.velocity(e, x - dx, t)) / (2 * d))
        return np.stack(cols, axis=-1)

    def scale(self, mesh):
        return float(np.linalg.norm(self.velocity(None, mesh.vertices), axis=-1).max())


class AffineField(VelocityField):
    """Piecewise-affine field ``u = a[e] + G[e] @ x`` from per-element arrays.

    A single ``a`` of shape (2,) and ``G`` of shape (2, 2) are broadcast to
    ``n_elements`` elements.
    """

    def __init__(self, a, G, n_elements=None):
        a = np.asarray(a, dtype=float)
        G = np.asarray(G, dtype=float)
        if a.ndim == 1:
            a = np.tile(a, (n_elements, 1))
            G = np.tile(G, (n_elements, 1, 1))
        self.affine = (a, G)

    def velocity(self, e, x, t=0.0):
        return self.affine[0][e] + self.affine[1][e] @ np.asarray(x, dtype=float)

    def gradient(self, e, x, t=0.0):
        return self.affine[1][e]


class DiscreteField(VelocityField):
    """Finite element velocity divided element-wise by the porosity."""

    def __init__(self, solution, porosity=None):
        self.solution = solution
        mesh = solution.space.mesh
        self.porosity = (np.ones(mesh.n_elements) if porosity is None
                         else np.asarray(porosity, dtype=float))
        if solution.space.k == 0:
            a, G = solution.affine_coefficients()
            self.affine = (a / self.porosity[:, None], G / self.porosity[:, None, None])

    def velocity(self, e, x, t=0.0):
        if self.affine is not None:
            return self.affine[0][e] + self.affine[1][e] @ np.asarray(x, dtype=float)
        return self.solution.velocity([e], np.asarray(x)[None], check=False)[0] / self.porosity[e]

    def gradient(self, e, x, t=0.0):
        if self.affine is not None:
            return self.affine[1][e]
        return (self.solution.velocity_gradient([e], np.asarray(x)[None], check=False)[0]
                / self.porosity[e])

    def scale(self, mesh):
        space = self.solution.space
        ne = mesh.n_elements
        v = self.solution.velocity(np.arange(ne), mesh.centroid, check=False)
        return float(np.linalg.norm(v / self.porosity[:, None], axis=1).max())


def transport_field(sol, problem):
    """Transport velocity ``u_h / phi`` with region-wise porosity."""
    _, phi = problem.material_arrays(sol.space.mesh)
    return DiscreteField(sol, phi)


# --------------------------------------------------------------------------
# trajectories


@dataclass
class Segment:
    """Part of the path inside one element.

    ``face`` is the global face crossed at ``t1``; ``local_edge`` its local
    index in ``element``. For affine fields ``affine = (a, G)`` and the
    position is exact; otherwise ``dense`` is the integrator's interpolant.
    """

    element: int
    t0: float
    t1: float
    x0: np.ndarray
    x1: np.ndarray
    face: int
    local_edge: int
    affine: Optional[tuple] = None
    dense: Optional[Callable] = None

    def position(self, t):
        t = np.asarray(t, dtype=float)
        if self.affine is not None:
            a, G = self.affine
            v0 = a + G @ self.x0
            return self.x0 + phi_flow(G, t - self.t0) @ v0
        return np.moveaxis(self.dense(t), 0, -1)


@dataclass
class Trajectory:
    segments: list
    travel_time: float
    exit_normal: np.ndarray
    exit_velocity: np.ndarray
    exit_face: int
    mesh: object = field(repr=False, default=None)
    field: object = field(repr=False, default=None)

    @property
    def elements(self):
        return [s.element for s in self.segments]

    @property
    def crossing_times(self):
        return np.array([self.segments[0].t0] + [s.t1 for s in self.segments])

    @property
    def exit_point(self):
        return self.segments[-1].x1

    def position(self, t):
        t = float(t)
        for s in self.segments:
            if t <= s.t1:
                return s.position(t)
        raise ValueError("time beyond the travel time")

    def sample(self, per_segment=4):
        """Rows ``(t, x, y, element)`` at segment ends and interior samples."""
        rows = []
        for s in self.segments:
            ts = np.linspace(s.t0, s.t1, per_segment + 1)[:-1]
            xs = [s.x0] + [s.position(t) for t in ts[1:]]
            rows += [(t, x[0], x[1], s.element) for t, x in zip(ts, xs)]
        last = self.segments[-1]
        rows.append((last.t1, last.x1[0], last.x1[1], last.element))
        return rows

    def to_csv(self, path, per_segment=4):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "element_id"])
            for t, x, y, e in self.sample(per_segment):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(y)), int(e)])

    def to_vtk(self, path, per_segment=4):
        rows = np.array(self.sample(per_segment))
        write_polyline(path, rows[:, 1:3], point_data={"t": rows[:, 0], "element": rows[:, 3]})


# --------------------------------------------------------------------------
# exact propagation for affine fields


def _edge_data(verts):
    """Outward unit normals and base points of the 3 edges (edge i opposite vertex i)."""
    P = verts[[1, 2, 0]]
    Q = verts[[2, 0, 1]]
    d = Q - P
    L = np.linalg.norm(d, axis=1)
    N = np.column_stack([d[:, 1], -d[:, 0]]) / L[:, None]
    return N, P, Q, L


def _project_exit(x, P, Q, L, i, h):
    d = Q[i] - P[i]
    s = float(np.clip((x - P[i]) @ d / (L[i] * L[i]), 0.0, 1.0))
    if min(s, 1.0 - s) * L[i] <= VERTEX_TOL * h:
        raise VertexPassageError(f"trajectory passes through a vertex (edge parameter {s:.3e})")
    return P[i] + s * d


def _time_grid(t_start, tau0, dt_cap, n):
    """Next ``n`` grid times after ``t_start``: geometric growth capped at ``dt_cap``."""
    out = np.empty(n)
    t = t_start
    for j in range(n):
        step = max(t * (_GRID_RATIO - 1.0), tau0) if t > 0 else tau0
        t = t + min(step, dt_cap)
        out[j] = t
    return out


def propagate_in_element(a, G, entry, verts, entry_edge=None, t_limit=np.inf):
    """Exact motion through one element of the affine field ``a + G x``.

    Parameters
    ----------
    a, G : ndarray
        Velocity coefficients on the element.
    entry : ndarray, shape (2,)
    verts : ndarray, shape (3, 2)
        Counter-clockwise vertices; local edge ``i`` is opposite vertex ``i``.
    entry_edge : int, optional
        Local edge the particle enters through (excluded from the search at t=0).
    t_limit : float
        Give up (``BudgetExceededError``) when no exit occurs before this time.

    Returns
    -------
    exit_point, dwell, local_edge
    """
    a = np.asarray(a, dtype=float)
    G = np.asarray(G, dtype=float)
    entry = np.asarray(entry, dtype=float)
    verts = np.asarray(verts, dtype=float)
    N, P, Q, L = _edge_data(verts)
    h = float(L.max())
    v0 = a + G @ entry
    speed = float(np.linalg.norm(v0))
    gscale = float(np.abs(G).max()) * h + float(np.linalg.norm(a))
    if speed <= STAGNATION_TOL * max(gscale, np.finfo(float).tiny):
        raise StagnationError("particle starts at a stagnation point")
    c = N @ entry - np.sum(N * P, axis=1)
    if entry_edge is not None:
        c[entry_edge] = 0.0
    Nv = N @ v0

    def g(t):
        return c + N @ (phi_flow(G, t) @ v0)

    def dg(t):
        return N @ (expm_flow(G, t) @ v0)

    tau0 = 1e-3 * h / speed
    m = 0.5 * (G[0, 0] + G[1, 1])
    d2 = (0.5 * (G[0, 0] - G[1, 1])) ** 2 + G[0, 1] * G[1, 0]
    dt_cap = np.pi / (4.0 * np.sqrt(-d2)) if d2 < 0 else np.inf
    internal = INTERNAL_CAP * h / speed
    t_cap = min(internal, t_limit)

    t_prev = 0.0
    g_prev = c.copy()
    dg_prev = Nv
    if entry_edge is not None:
        g_prev[entry_edge] = -np.inf  # the entry crossing itself is not an exit
    while t_prev < t_cap:
        ts = _time_grid(t_prev, tau0, dt_cap, _CHUNK)
        with np.errstate(over="ignore", invalid="ignore"):
            Phi = phi_flow(G, ts)
            E = expm_flow(G, ts)
            gs = c[None, :] + np.einsum("id,tdk,k->ti", N, Phi, v0)
            dgs = np.einsum("id,tdk,k->ti", N, E, v0)
        finite = np.all(np.isfinite(gs), axis=1) & np.all(np.isfinite(dgs), axis=1)
        if not finite.all():
            # exponential growth beyond float range while staying inside the
            # element can only mean cancellation toward a stagnation point
            ts = ts[:np.argmin(finite)]
            t_cap = ts[-1] if len(ts) else t_prev
            internal = min(internal, t_cap)
        for j in range(len(ts)):
            ta, tb = t_prev, ts[j]
            ga, gb = g_prev, gs[j]
            cand = []
            for i in range(3):
                if gb[i] >= 0.0 and ga[i] < 0.0:
                    lo = ta
                    if not np.isfinite(ga[i]):
                        lo = _first_negative(lambda t: g(t)[i], ta, tb)
                        if lo is None:
                            continue
                    cand.append((_root(lambda t: g(t)[i], lo, tb), i))
                elif dg_prev[i] > 0.0 and dgs[j, i] < 0.0 and gb[i] < 0.0:
                    # interior maximum: may touch the edge inside (ta, tb)
                    tm = _root(lambda t: dg(t)[i], ta, tb)
                    if g(tm)[i] >= 0.0 and (np.isfinite(ga[i]) or tm > ta):
                        lo = ta if np.isfinite(ga[i]) else _first_negative(
                            lambda t: g(t)[i], ta, tm)
                        if lo is not None:
                            cand.append((_root(lambda t: g(t)[i], lo, tm), i))
            if cand:
                t_exit, i = min(cand)
                X = entry + phi_flow(G, t_exit) @ v0
                return _project_exit(X, P, Q, L, i, h), float(t_exit), i
            t_prev, g_prev, dg_prev = tb, gb, dgs[j]
            if t_prev >= t_cap:
                break
    X = entry + phi_flow(G, t_prev) @ v0
    if t_limit <= internal:
        raise BudgetExceededError("time budget exhausted without leaving the domain")
    if np.linalg.norm(a + G @ X) <= 1e-6 * speed:
        raise StagnationError("trajectory approaches a stagnation point inside an element")
    raise RecirculationError("no exit from element before the internal time cap")


def _first_negative(fun, ta, tb):
    """Smallest sampled time in (ta, tb] with fun < 0 (entry edge bookkeeping)."""
    for t in ta + (tb - ta) * np.logspace(-8, 0, 25):
        if fun(t) < 0.0:
            return t
    return None


def _root(fun, ta, tb):
    fa, fb = fun(ta), fun(tb)
    if fa == 0.0:
        return ta
    if fb == 0.0 or fa * fb > 0.0:
        return tb
    return brentq(fun, ta, tb, xtol=1e-15 * max(abs(tb), 1e-300), rtol=4 * np.finfo(float).eps,
                  maxiter=200)


# --------------------------------------------------------------------------
# Runge-Kutta propagation for general fields


def _propagate_rk(vfield, e, entry, t0, verts, t_limit, speed_scale):
    N, P, Q, L = _edge_data(verts)
    h = float(L.max())

    def rhs(t, x):
        return vfield.velocity(e, x, t)

    def make_event(i):
        def ev(t, x):
            return N[i] @ x - N[i] @ P[i]
        ev.terminal = True
        ev.direction = 1.0
        return ev

    events = [make_event(i) for i in range(3)]
    v0 = vfield.velocity(e, entry, t0)
    speed = float(np.linalg.norm(v0))
    if speed <= STAGNATION_TOL * speed_scale:
        raise StagnationError("particle starts at a stagnation point")
    t_end = t0 + min(INTERNAL_CAP * h / speed, t_limit - t0)
    sol = solve_ivp(rhs, (t0, t_end), entry, method="RK45", rtol=RK_RTOL,
                    atol=1e-14 * max(h, float(np.abs(entry).max())),
                    events=events, dense_output=True, max_step=h / speed)
    hits = [(float(te[0]), i) for i, te in enumerate(sol.t_events) if len(te)]
    if not hits:
        if t_limit - t0 <= INTERNAL_CAP * h / speed:
            raise BudgetExceededError("time budget exhausted without leaving the domain")
        x_end = sol.y[:, -1]
        if np.linalg.norm(vfield.velocity(e, x_end, t_end)) <= 1e-6 * speed:
            raise StagnationError("trajectory approaches a stagnation point inside an element")
        raise RecirculationError("no exit from element before the internal time cap")
    t_exit, i = min(hits)
    X = sol.sol(t_exit)
    return _project_exit(X, P, Q, L, i, h), t_exit, i, sol.sol


# --------------------------------------------------------------------------
# driver


def _start_element(mesh, vfield, x0):
    elems, lam = containing_elements(mesh, x0)
    if len(elems) == 0:
        from .errors import PointLocationError
        raise PointLocationError(f"release point {tuple(x0)} lies outside the mesh")
    if len(elems) == 1:
        return int(elems[0])
    for e in elems:
        verts = mesh.vertices[mesh.triangles[e]]
        N, P, _, _ = _edge_data(verts)
        on = np.flatnonzero(np.abs(lam[e]) <= 1e-12)
        v = vfield.velocity(e, x0)
        if all(N[i] @ v < 0.0 for i in on):
            return int(e)
    return int(elems[0])


def trace(vfield, mesh, x0, t_max=np.inf):
    """Trace the pathline from ``x0`` until it leaves the domain.

    Returns
    -------
    Trajectory

    Raises
    ------
    StagnationError, RecirculationError, BudgetExceededError
        The path does not reach the boundary.
    VertexPassageError, TangentialExitError
        The path leaves an element through a vertex or grazes the boundary.
    """
    x = np.asarray(x0, dtype=float)
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    e = _start_element(mesh, vfield, x)
    scale = vfield.scale(mesh)
    t = 0.0
    entry_edge = None
    segments = []
    for _ in range(MAX_SEGMENTS):
        verts = mesh.vertices[mesh.triangles[e]]
        if vfield.affine is not None and not vfield.time_dependent:
            a, G = vfield.affine[0][e], vfield.affine[1][e]
            x_out, dwell, i = propagate_in_element(a, G, x, verts, entry_edge, t_max - t)
            t_out = t + dwell
            seg = Segment(e, t, t_out, x, x_out, int(mesh.element_faces[e, i]), i,
                          affine=(a, G))
        else:
            x_out, t_out, i, dense = _propagate_rk(vfield, e, x, t, verts, t_max, scale)
            seg = Segment(e, t, t_out, x, x_out, int(mesh.element_faces[e, i]), i, dense=dense)
        if not t_out > t:
            raise VertexPassageError("zero-length segment: path touches an element corner")
        segments.append(seg)
        f = seg.face
        nxt = mesh.neighbor(e, i)
        normal = mesh.face_normal[f] * (1.0 if mesh.face_left[f] == e else -1.0)
        v_out = vfield.velocity(e, x_out, t_out)
        vn = float(v_out @ normal)
        if abs(vn) <= TANGENTIAL_TOL * np.linalg.norm(v_out):
            raise TangentialExitError(f"trajectory leaves element {e} tangentially")
        if nxt < 0:
            return Trajectory(segments, t_out, normal.copy(), v_out, f, mesh, vfield)
        if t_out > t_max:
            raise BudgetExceededError("time budget exhausted without leaving the domain")
        entry_edge = int(np.flatnonzero(mesh.element_faces[nxt] == f)[0])
        e, x, t = nxt, x_out, t_out
    raise RecirculationError("too many element crossings")
