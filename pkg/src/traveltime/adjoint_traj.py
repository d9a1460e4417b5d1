"""Backward adjoint along a traced pathline and the travel-time derivative.

For a path ``X`` of the field ``v`` that leaves the domain at time ``T``
through a face with outward normal ``n``, the adjoint ``Z`` solves

    -dZ/dt = grad(v)(X(t))^T Z,      Z(T) = -n / (v.n),

inside every element. Where the path crosses a face on which ``v`` jumps, the
adjoint jumps too:

    Z(t-) = Z(t+) + (Z(t+) . [v]) n / (v(t-) . n),     [v] = v(t+) - v(t-).

The derivative of the travel time in direction ``w`` is then
``T'[v](w) = int_0^T Z(t) . w(X(t)) dt``.
"""

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import TangentialExitError
from .linalg2x2 import expm_flow
from .quadrature import gauss_interval
from .tracer import TANGENTIAL_TOL

ADJ_RTOL = 1e-11


def terminal_condition(traj):
    """``Z(T) = -n / (v.n)`` at the exit point."""
    n = np.asarray(traj.exit_normal, dtype=float)
    v = np.asarray(traj.exit_velocity, dtype=float)
    vn = float(v @ n)
    if abs(vn) <= TANGENTIAL_TOL * np.linalg.norm(v):
        raise TangentialExitError("trajectory leaves the domain tangentially")
    return -n / vn


def jump_backward(Z_plus, v_minus, v_plus, n_minus):
    """Adjoint value just before a face crossing.

    The result does not depend on the sign of ``n_minus``.
    """
    Z_plus = np.asarray(Z_plus, dtype=float)
    v_minus = np.asarray(v_minus, dtype=float)
    n = np.asarray(n_minus, dtype=float)
    jump_v = np.asarray(v_plus, dtype=float) - v_minus
    vn = float(v_minus @ n)
    if abs(vn) <= TANGENTIAL_TOL * np.linalg.norm(v_minus):
        raise TangentialExitError("trajectory crosses a face tangentially")
    return Z_plus + (Z_plus @ jump_v) * n / vn


@dataclass
class AdjointSegment:
    """Adjoint on one trajectory segment.

    ``Z_right = Z(t1-)`` and ``Z_left = Z(t0+)``. Constant generators are kept
    as ``upsilon`` (closed-form propagation); otherwise ``dense`` interpolates
    the backward integration.
    """

    element: int
    t0: float
    t1: float
    Z_left: np.ndarray
    Z_right: np.ndarray
    upsilon: Optional[np.ndarray] = None
    dense: Optional[Callable] = None

    def Z(self, t):
        t = np.asarray(t, dtype=float)
        if self.upsilon is not None:
            return expm_flow(self.upsilon, self.t1 - t) @ self.Z_right
        return np.moveaxis(self.dense(t), 0, -1)


@dataclass
class Crossing:
    """Data of one interior face crossing, kept for checking the jump rule."""

    t: float
    Z_plus: np.ndarray
    Z_minus: np.ndarray
    v_minus: np.ndarray
    v_plus: np.ndarray
    normal: np.ndarray


@dataclass
class AdjointTrajectory:
    trajectory: object
    segments: list
    Z_T: np.ndarray
    crossings: list = field(default_factory=list)

    def Z(self, t):
        for s in self.segments:
            if t <= s.t1:
                return s.Z(t)
        raise ValueError("time beyond the travel time")

    def quadrature(self, order=5):
        """Per-segment Gauss nodes: yields ``(element, t, X, Z, weights)``."""
        s, w = gauss_interval(order)
        for aseg, tseg in zip(self.segments, self.trajectory.segments):
            dt = tseg.t1 - tseg.t0
            t = tseg.t0 + dt * s
            yield aseg.element, t, tseg.position(t), aseg.Z(t), dt * w

    def to_csv(self, path, order=5):
        rows = []
        for aseg, (e, t, X, Z, _) in zip(self.segments, self.quadrature(order)):
            rows.append((aseg.t0, *aseg.Z_left, e))
            rows += [(tq, *zq, e) for tq, zq in zip(t, Z)]
            rows.append((aseg.t1, *aseg.Z_right, e))
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "Z1", "Z2", "element_id"])
            for t, z1, z2, e in rows:
                wr.writerow([repr(float(t)), repr(float(z1)), repr(float(z2)), int(e)])


def _backward_rk(vfield, tseg, Z_right):
    e = tseg.element

    def rhs(t, Z):
        X = tseg.position(t)
        return -vfield.gradient(e, X, t).T @ Z

    scale = float(np.abs(Z_right).max())
    sol = solve_ivp(rhs, (tseg.t1, tseg.t0), Z_right, method="RK45", rtol=ADJ_RTOL,
                    atol=1e-12 * scale, dense_output=True)
    return sol.y[:, -1], sol.sol


def solve_adjoint(traj, vfield=None):
    """Walk the trajectory backwards and build the piecewise adjoint."""
    vfield = traj.field if vfield is None else vfield
    Z = terminal_condition(traj)
    Z_T = Z.copy()
    segs = traj.segments
    out = [None] * len(segs)
    crossings = []
    for i in range(len(segs) - 1, -1, -1):
        ts = segs[i]
        if ts.affine is not None:
            ups = np.asarray(ts.affine[1]).T
            Z_left = expm_flow(ups, ts.t1 - ts.t0) @ Z
            out[i] = AdjointSegment(ts.element, ts.t0, ts.t1, Z_left, Z, upsilon=ups)
        else:
            Z_left, dense = _backward_rk(vfield, ts, Z)
            out[i] = AdjointSegment(ts.element, ts.t0, ts.t1, Z_left, Z, dense=dense)
        if i == 0:
            break
        prev = segs[i - 1]
        x = ts.x0
        v_minus = vfield.velocity(prev.element, x, ts.t0)
        v_plus = vfield.velocity(ts.element, x, ts.t0)
        n = traj.mesh.face_normal[prev.face]
        Z_minus = jump_backward(Z_left, v_minus, v_plus, n)
        crossings.append(Crossing(ts.t0, Z_left, Z_minus, v_minus, v_plus, n.copy()))
        Z = Z_minus
    crossings.reverse()
    return AdjointTrajectory(traj, out, Z_T, crossings)


def _evaluate(w, e, X, t):
    if hasattr(w, "velocity"):
        return np.array([w.velocity(e, x, tq) for x, tq in zip(X, t)])
    return np.asarray(w(e, X), dtype=float)


def gateaux_derivative(adj, w, order=5):
    """``int_0^T Z . w(X(t)) dt`` by per-segment Gauss quadrature.

    ``w`` is a velocity field (anything with ``velocity(e, x)``) or a callable
    ``w(e, X)`` returning values at an array of points in element ``e``.
    """
    total = 0.0
    for e, t, X, Z, wt in adj.quadrature(order):
        total += float(np.sum(wt * np.einsum("qc,qc->q", Z, _evaluate(w, e, X, t))))
    return total


def transport_chain(adj, w, porosity, order=5):
    """Derivative with respect to the Darcy velocity in direction ``w``.

    ``adj`` must be built on the transport field ``v/phi``; the perturbation is
    divided by the porosity of each crossed element. ``porosity`` is a
    per-element array.
    """
    porosity = np.asarray(porosity, dtype=float)

    def scaled(e, X):
        return _evaluate(w, e, X, np.zeros(len(X))) / porosity[e]

    return gateaux_derivative(adj, scaled, order)


def jump_defect(adj):
    """Largest relative defect of the interface relation over all crossings.

    Checks ``Z(t+) - Z(t-) = -(Z(t+) . [v]) n / (v(t-) . n)`` at every recorded
    crossing; returns 0.0 for a path without crossings.
    """
    worst = 0.0
    for c in adj.crossings:
        jump_v = c.v_plus - c.v_minus
        expected = -(c.Z_plus @ jump_v) * c.normal / (c.v_minus @ c.normal)
        scale = max(np.linalg.norm(c.Z_plus), np.linalg.norm(c.Z_minus))
        worst = max(worst, float(np.linalg.norm((c.Z_plus - c.Z_minus) - expected) / scale))
    return worst
