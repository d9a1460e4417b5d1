"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The verdict lines are printed at the end of the pytest run (see conftest).
"""

import time
from contextlib import contextmanager

import mpmath as mp
import numpy as np
import pytest
from conftest import ACCEPTANCE
from scipy.linalg import expm

from traveltime import darcy_fem as fem
from traveltime import dwr
from traveltime.adjoint_traj import gateaux_derivative, jump_defect, solve_adjoint, transport_chain
from traveltime.errors import AssumptionViolation
from traveltime.linalg2x2 import expm2
from traveltime.mesh import uniform_refine
from traveltime.pipeline import path_adjacent, run_loop, solve_step
from traveltime.problems import shipped
from traveltime.tracer import AnalyticField, DiscreteField, trace, transport_field

T_CLOSED = float(np.log((np.tan(1.0) + 1 / np.cos(1.0)) / (np.tan(0.3) + 1 / np.cos(0.3))))


@contextmanager
def criterion(n, title):
    """Record the verdict of criterion ``n``; ``rec['detail']`` is reported."""
    rec = {"detail": ""}
    t0 = time.perf_counter()
    try:
        yield rec
    except BaseException as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        ACCEPTANCE[n] = (False, title, msg[:300])
        print(f"criterion {n} FAIL: {title} ({msg[:300]})")
        raise
    detail = f"{rec['detail']}; {time.perf_counter() - t0:.1f} s"
    ACCEPTANCE[n] = (True, title, detail)
    print(f"criterion {n} PASS: {title} ({detail})")


def check(ok, message):
    if not ok:
        raise AssertionError(message)


def analytic_example_I():
    cfg = shipped("example_I")
    func, jac = cfg.exact_velocity()
    return cfg, AnalyticField(func, lambda x: jac(np.asarray(x)))


def velocity_scale(sol):
    X, _ = sol.space.quadrature()
    ne, nq = X.shape[:2]
    el = np.repeat(np.arange(ne), nq)
    return float(np.abs(sol.velocity(el, X.reshape(-1, 2), check=False)).max())


def invariant_defects(step, problem):
    """(localization, jump, face normal jump, mass defect) relative defects."""
    loc, _, _ = dwr.localization_defect(step.primal, step.adjoint_solution, step.interpolant,
                                        problem)
    scale = velocity_scale(step.primal)
    normal = float(fem.normal_jumps(step.primal).max()) / scale
    mesh = step.mesh
    mass = 0.0
    if step.primal.space.k == 0:
        mass = float(np.max(np.abs(fem.mass_defects(step.primal, problem)) / (mesh.area * scale)))
    return loc, jump_defect(step.adjoint), normal, mass


def check_invariants(step, problem, where):
    loc, jump, normal, mass = invariant_defects(step, problem)
    check(loc <= 1e-12, f"{where}: localization defect {loc:.2e}")
    check(jump <= 1e-12, f"{where}: jump defect {jump:.2e}")
    check(normal <= 1e-10, f"{where}: normal jump {normal:.2e}")
    check(mass <= 1e-12, f"{where}: mass defect {mass:.2e}")
    return loc, jump, normal, mass


# -- criterion 1 -------------------------------------------------------------------

def test_criterion_01_exact_travel_time():
    with criterion(1, "exact travel time on the analytic Example I field") as rec:
        cfg, field = analytic_example_I()
        mesh = cfg.build_mesh()
        t0 = time.perf_counter()
        traj = trace(field, mesh, cfg.release_point)
        dt = time.perf_counter() - t0
        rel = abs(traj.travel_time - T_CLOSED) / T_CLOSED
        check(rel <= 1e-9, f"relative error {rel:.2e}")
        check(dt < 1.0, f"runtime {dt:.2f} s")
        rec["detail"] = f"T = {traj.travel_time:.12f}, rel. error {rel:.1e}, {dt * 1e3:.0f} ms"


# -- criterion 2 -------------------------------------------------------------------

def test_criterion_02_effectivity_example_I():
    with criterion(2, "Example I uniform effectivity and error decay") as rec:
        cfg = shipped("example_I")
        t0 = time.perf_counter()
        res = run_loop(cfg.build_mesh(), cfg.problem_spec(), "uniform", max_iters=6, keep=False)
        dt = time.perf_counter() - t0
        check(res.error is None, f"run failed: {res.error}")
        check(len(res.steps) == 6, f"{len(res.steps)} rows")
        T = cfg.exact_travel_time
        err = [T - s.travel_time for s in res.steps]
        theta = [dwr.effectivity(e, s.estimate) for e, s in zip(err, res.steps)]
        bad = [(i, t) for i, t in enumerate(theta) if i >= 2 and not 0.9 <= t <= 1.12]
        check(not bad, f"effectivity outside [0.9, 1.12]: {bad}")
        drop = abs(err[0]) / abs(err[-1])
        check(drop >= 1e3, f"error reduction {drop:.1e}")
        check(dt < 300, f"runtime {dt:.0f} s")
        rec["detail"] = (f"theta = {', '.join(f'{t:.3f}' for t in theta)}; "
                         f"|err| {abs(err[0]):.2e} -> {abs(err[-1]):.2e}")


# -- criterion 3 -------------------------------------------------------------------

def _fd_fem(name, levels, rng, n=10):
    cfg = shipped(name)
    prob = cfg.problem_spec()
    mesh = uniform_refine(cfg.build_mesh(), levels)
    sol = fem.solve(fem.assemble(fem.build_space(mesh, 0, prob), prob))
    _, phi = prob.material_arrays(mesh)
    x0 = cfg.release_point
    traj = trace(transport_field(sol, prob), mesh, x0)
    adj = solve_adjoint(traj)
    space = sol.space
    worst = 0.0
    for _ in range(n):
        w = rng.normal(size=space.n_vel)
        w[space.constrained] = 0.0
        eps = 1e-5 * np.linalg.norm(sol.u) / np.linalg.norm(w)
        d = transport_chain(adj, DiscreteField(fem.MixedSolution(space, w, 0 * sol.p)), phi)

        def T(s):
            pert = fem.MixedSolution(space, sol.u + s * w, sol.p)
            return trace(DiscreteField(pert, phi), mesh, x0).travel_time

        fd = (T(eps) - T(-eps)) / (2 * eps)
        worst = max(worst, abs(d - fd) / abs(fd))
    return worst


def _fd_analytic(rng, n=10):
    cfg, field = analytic_example_I()
    mesh = cfg.build_mesh()
    x0 = cfg.release_point
    adj = solve_adjoint(trace(field, mesh, x0))
    worst = 0.0
    for _ in range(n):
        A = rng.normal(size=(2, 3))
        B = rng.uniform(-3, 3, size=(2, 3, 2))

        def w(X, A=A, B=B):
            X = np.asarray(X)
            return np.stack([np.sum(A[c] * np.cos(X @ B[c].T), axis=-1) for c in range(2)], -1)

        def T(s, w=w):
            f = AnalyticField(lambda X: field.func(X) + s * w(X))
            return trace(f, mesh, x0).travel_time

        eps = 1e-5
        d = gateaux_derivative(adj, lambda e, X: w(X))
        fd = (T(eps) - T(-eps)) / (2 * eps)
        worst = max(worst, abs(d - fd) / abs(fd))
    return worst


def test_criterion_03_derivative_oracle():
    with criterion(3, "Gateaux derivative against central differences") as rec:
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        errs = {"I analytic": _fd_analytic(rng),
                "I FEM": _fd_fem("example_I", 3, rng),
                "II FEM": _fd_fem("example_II", 3, rng)}
        dt = time.perf_counter() - t0
        for key, e in errs.items():
            check(e <= 1e-4, f"{key}: worst relative error {e:.2e}")
        check(dt < 120, f"runtime {dt:.0f} s")
        rec["detail"] = ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + " (10 directions each)"


# -- criteria 4, 5 and 6 ------------------------------------------------------------

def _sweep_steps():
    """Every shipped example on a ladder of uniform and adaptive meshes."""
    for name, levels, k in [("example_I", 4, 0), ("example_I", 2, 1), ("example_I_crossed", 3, 0),
                            ("manufactured_affine", 3, 0), ("example_II", 4, 0),
                            ("example_II", 2, 1), ("example_III", 1, 0)]:
        cfg = shipped(name)
        prob = cfg.problem_spec()
        t_max = cfg.tracer.get("t_max", np.inf)
        mesh = cfg.build_mesh()
        for lev in range(levels + 1):
            yield f"{name} k={k} uniform {lev}", solve_step(mesh, prob, k, t_max=t_max), prob
            mesh = uniform_refine(mesh, 1)
    for name, iters in [("example_I", 5), ("example_II", 8), ("example_III", 3)]:
        cfg = shipped(name)
        prob = cfg.problem_spec()
        res = run_loop(cfg.build_mesh(), prob, "adaptive", 0.1, iters,
                       t_max=cfg.tracer.get("t_max", np.inf))
        check(res.error is None, f"{name} adaptive: {res.error}")
        for i, s in enumerate(res.steps):
            yield f"{name} adaptive {i}", s, prob


@pytest.fixture(scope="module")
def sweep():
    return list(_sweep_steps())


def test_criterion_04_jump_identity(sweep):
    with criterion(4, "adjoint jump relation at every crossing") as rec:
        worst, crossings = 0.0, 0
        for where, step, _ in sweep:
            d = jump_defect(step.adjoint)
            check(d <= 1e-12, f"{where}: defect {d:.2e}")
            worst = max(worst, d)
            crossings += len(step.adjoint.crossings)
        cfg, field = analytic_example_I()
        zero = 0
        for lev in range(4):
            adj = solve_adjoint(trace(field, uniform_refine(cfg.build_mesh(), lev),
                                      cfg.release_point))
            for c in adj.crossings:
                check(np.array_equal(c.Z_plus, c.Z_minus), "nonzero jump for a continuous field")
                zero += 1
        rec["detail"] = (f"{len(sweep)} discrete paths, {crossings} crossings, worst {worst:.1e}; "
                         f"{zero} analytic crossings with zero jump")


def test_criterion_05_localization_identity(sweep):
    with criterion(5, "summed indicators equal the global residual") as rec:
        worst = 0.0
        for where, step, prob in sweep:
            d, est, R = dwr.localization_defect(step.primal, step.adjoint_solution,
                                                step.interpolant, prob)
            check(d <= 1e-12, f"{where}: defect {d:.2e} (estimate {est:.3e}, residual {R:.3e})")
            worst = max(worst, d)
        rec["detail"] = f"{len(sweep)} meshes, worst relative defect {worst:.1e}"


def test_criterion_06_conformity_conservation(sweep):
    with criterion(6, "normal continuity and elementwise mass balance") as rec:
        wn = wm = 0.0
        for where, step, prob in sweep:
            _, _, normal, mass = invariant_defects(step, prob)
            check(normal <= 1e-10, f"{where}: normal jump {normal:.2e}")
            check(mass <= 1e-12, f"{where}: mass defect {mass:.2e}")
            wn, wm = max(wn, normal), max(wm, mass)
        rec["detail"] = f"{len(sweep)} meshes, worst normal jump {wn:.1e}, mass {wm:.1e}"


# -- criterion 7 -------------------------------------------------------------------

def test_criterion_07_effectivity_arithmetic():
    with criterion(7, "effectivity ratios of two reference rows") as rec:
        a = dwr.effectivity(-8.274e-3, -8.476e-3)
        b = dwr.effectivity(1.188e-3, 1.719e-3)
        check(abs(a - 0.976) <= 5e-4, f"Example I row: {a:.4f}")
        check(abs(b - 0.691) <= 5e-4, f"Example II row: {b:.4f}")
        rec["detail"] = f"{a:.4f}, {b:.4f}"


# -- criterion 8 -------------------------------------------------------------------

def test_criterion_08_example_II_adaptive():
    with criterion(8, "Example II adaptive effectivity profile") as rec:
        cfg = shipped("example_II")
        ref = cfg.refinement
        t0 = time.perf_counter()
        res = run_loop(cfg.build_mesh(), cfg.problem_spec(), "adaptive", ref["fraction"],
                       ref["max_iters"], ref.get("max_dofs"), t_max=cfg.tracer["t_max"],
                       keep=False)
        dt = time.perf_counter() - t0
        if res.error is not None:
            check(not isinstance(res.error.cause, AssumptionViolation),
                  f"assumption violation: {res.error}")
            raise AssertionError(f"run failed: {res.error}")
        last = res.steps[-1]
        T_ref = last.travel_time + last.estimate
        theta = [dwr.effectivity(T_ref - s.travel_time, s.estimate) for s in res.steps]
        shown = ", ".join(f"{s.ndofs}:{t:.2f}" for s, t in zip(res.steps, theta))
        check(dt < 600, f"runtime {dt:.0f} s")
        check(all(0.6 <= t <= 1.4 for t in theta), f"effectivity outside [0.6, 1.4]: {shown}")
        check(all(0.9 <= t <= 1.1 for t in theta[-3:]),
              f"final three outside [0.9, 1.1]: {shown}")
        rec["detail"] = shown


# -- criterion 9 -------------------------------------------------------------------

def test_criterion_09_example_III_properties():
    with criterion(9, "Example III adaptive loop, path-concentrated marking, invariants") as rec:
        cfg = shipped("example_III")
        prob = cfg.problem_spec()
        ref = cfg.refinement
        near = []
        worst = np.zeros(4)

        def on_step(i, step):
            near.append(path_adjacent(step.mesh, step.trajectory))
            worst[:] = np.maximum(worst, check_invariants(step, prob, f"iteration {i}"))

        res = run_loop(cfg.build_mesh(), prob, "adaptive", ref["fraction"], ref["max_iters"],
                       ref.get("max_dofs"), t_max=cfg.tracer["t_max"], callback=on_step,
                       keep=False)
        check(res.error is None, f"run failed: {res.error}")
        check(len(res.steps) >= 5, f"only {len(res.steps)} iterations")
        shares = [len(m & near[i]) / len(m) for i, m in enumerate(res.marked)]
        # measured 0.958, 1.0, 0.913, 0.840, 0.762 on the shipped configuration
        check(all(s >= 0.70 for s in shares[2:]),
              f"path-adjacent shares {[round(s, 3) for s in shares]}")
        rec["detail"] = (f"{len(res.steps)} iterations to {res.steps[-1].ndofs} DOFs, "
                         f"T = {res.steps[-1].travel_time:.1f} years, shares "
                         f"{', '.join(f'{s:.2f}' for s in shares)}; worst defects "
                         f"{', '.join(f'{w:.0e}' for w in worst)}")


# -- criterion 10 ------------------------------------------------------------------

def test_criterion_10_matrix_exponential():
    with criterion(10, "closed-form 2x2 exponential against scaling and squaring") as rec:
        rng = np.random.default_rng(10)
        worst = worst_f64 = 0.0
        for _ in range(1000):
            A = rng.normal(size=(2, 2)) * rng.choice([0.01, 0.3, 1.0, 4.0])
            E = expm2(A)
            # Taylor scaling and squaring carried out with 40 digits
            with mp.workdps(40):
                ref = np.array(mp.expm(mp.matrix(A.tolist()), method="taylor").tolist(),
                               dtype=float)
            worst = max(worst, np.linalg.norm(E - ref) / np.linalg.norm(ref))
            f64 = expm(A)
            worst_f64 = max(worst_f64, np.linalg.norm(f64 - ref) / np.linalg.norm(ref))
        check(worst <= 1e-12, f"worst relative error {worst:.2e}")
        rec["detail"] = (f"1000 matrices, worst {worst:.1e}; double-precision Pade "
                         f"scaling and squaring reaches {worst_f64:.1e} on the same set")
