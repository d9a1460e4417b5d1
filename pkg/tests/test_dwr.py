import numpy as np
import pytest

from traveltime import darcy_fem as fem
from traveltime import dwr
from traveltime.adjoint_traj import transport_chain
from traveltime.mesh import uniform_refine
from traveltime.pipeline import path_adjacent, run_loop, solve_step
from traveltime.problems import shipped
from traveltime.tracer import DiscreteField


def step_on(name, levels=0, k=0):
    cfg = shipped(name)
    prob = cfg.problem_spec()
    return solve_step(uniform_refine(cfg.build_mesh(), levels), prob, k), prob


def as_function(sol):
    def func(elements, X):
        shp = X.shape
        el = np.broadcast_to(np.asarray(elements)[:, None], shp[:-1]).ravel()
        return sol.velocity(el, X.reshape(-1, 2), check=False).reshape(shp)
    return func


def random_solution(space, rng):
    u = rng.normal(size=space.n_vel)
    u[space.constrained] = 0.0
    return fem.MixedSolution(space, u, rng.normal(size=space.n_pr))


# -- adjoint right-hand side and solve -------------------------------------------

def test_rhs_matches_transport_chain():
    """Coefficients of any W_h member weighted by the RHS give its derivative."""
    step, prob = step_on("example_I", 2)
    W = step.adjoint_solution.space
    _, phi = prob.material_arrays(W.mesh)
    rhs = dwr.assemble_adjoint_rhs(W, step.adjoint, phi)
    rng = np.random.default_rng(3)
    for _ in range(5):
        w = random_solution(W, rng)
        d = transport_chain(step.adjoint, DiscreteField(w), phi)
        assert rhs[:W.n_vel] @ w.u == pytest.approx(d, rel=1e-12, abs=1e-14)
    assert np.all(rhs[W.n_vel:] == 0.0)


def test_rhs_self_direction_gives_minus_travel_time():
    step, prob = step_on("example_I", 2)
    W = step.adjoint_solution.space
    _, phi = prob.material_arrays(W.mesh)
    rhs = dwr.assemble_adjoint_rhs(W, step.adjoint, phi)
    coef = W.interpolate(as_function(step.primal))
    # u_h is scaled by 1/phi = 1 here
    assert rhs[:W.n_vel] @ coef == pytest.approx(-step.travel_time, rel=1e-12)


def test_rhs_vanishes_away_from_path():
    step, prob = step_on("example_I", 3)
    W = step.adjoint_solution.space
    _, phi = prob.material_arrays(W.mesh)
    rhs = dwr.assemble_adjoint_rhs(W, step.adjoint, phi)
    crossed = np.unique(step.trajectory.elements)
    touched = np.zeros(W.ndofs, dtype=bool)
    touched[np.unique(W.elem_dofs[crossed])] = True
    assert np.all(rhs[~touched] == 0.0)
    assert np.count_nonzero(rhs) > 0


def test_rhs_mesh_mismatch():
    step, prob = step_on("example_I", 1)
    other = fem.build_space(uniform_refine(step.mesh, 1), 1, prob)
    with pytest.raises(ValueError):
        dwr.assemble_adjoint_rhs(other, step.adjoint, np.ones(other.mesh.n_elements))


def test_adjoint_matrix_symmetric_and_zero_rhs():
    cfg = shipped("example_II")
    prob = cfg.problem_spec()
    system = fem.assemble(fem.build_space(uniform_refine(cfg.build_mesh(), 1), 1, prob), prob)
    M = system.matrix
    assert abs(M - M.T).max() == 0.0
    sol = dwr.solve_discrete_adjoint(system, np.zeros(system.space.ndofs))
    assert not sol.u.any() and not sol.p.any()


def test_adjoint_velocity_concentrates_near_path():
    """Share of the L1 mass of |z_h| within one layer of the path, finest uniform mesh."""
    step, _ = step_on("example_I", 5)
    mesh = step.mesh
    W = step.adjoint_solution.space
    X, wJ = W.quadrature()
    ne, nq = X.shape[:2]
    el = np.repeat(np.arange(ne), nq)
    z = step.adjoint_solution.velocity(el, X.reshape(-1, 2), check=False).reshape(ne, nq, 2)
    mass = np.sum(wJ * np.linalg.norm(z, axis=2), axis=1)
    near = np.array(sorted(path_adjacent(mesh, step.trajectory)))
    # measured 0.7538 on 8320 DOFs; the elliptic part of z_h is not local
    assert mass[near].sum() / mass.sum() >= 0.75


# -- interpolation ---------------------------------------------------------------

def test_face_copy_equals_quadrature_interpolant():
    step, _ = step_on("example_II", 2)
    V = step.primal.space
    full = V.interpolate(as_function(step.adjoint_solution))
    full[V.constrained] = 0.0
    scale = np.abs(full).max()
    assert np.allclose(step.interpolant.u, full, rtol=0, atol=1e-12 * scale)


def test_interpolation_idempotent():
    cfg = shipped("example_I")
    prob = cfg.problem_spec()
    mesh = uniform_refine(cfg.build_mesh(), 1)
    V = fem.build_space(mesh, 0, prob)
    W = fem.build_space(mesh, 1, prob)
    v = random_solution(V, np.random.default_rng(1))
    w = fem.MixedSolution(W, W.interpolate(as_function(v)),
                          W.project_pressure(lambda e, X: v.pressure(
                              np.broadcast_to(e[:, None], X.shape[:-1]).ravel(),
                              X.reshape(-1, 2)).reshape(X.shape[:-1])))
    back = dwr.interpolate_adjoint(w, V)
    assert np.allclose(back.u, v.u, atol=1e-12)
    assert np.allclose(back.p, v.p, atol=1e-12)


def test_pressure_projection_of_linear_is_centroid_value(square):
    V = fem.build_space(square, 0)
    W = fem.build_space(square, 1)
    r = W.project_pressure(lambda e, X: 1.0 + 2.0 * X[..., 0] - 3.0 * X[..., 1])
    w = fem.MixedSolution(W, np.zeros(W.n_vel), r)
    rI = dwr.interpolate_adjoint(w, V).p
    c = square.centroid
    assert np.allclose(rI, 1.0 + 2.0 * c[:, 0] - 3.0 * c[:, 1], atol=1e-14)


def test_lowest_face_moments_preserved():
    cfg = shipped("example_I")
    mesh = uniform_refine(cfg.build_mesh(), 1)
    V = fem.build_space(mesh, 0)
    W = fem.build_space(mesh, 1)
    z = random_solution(W, np.random.default_rng(5))
    zI = dwr.interpolate_adjoint(z, V)
    s = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
    wq = np.array([5, 8, 5]) / 18
    for f in range(mesh.n_faces):
        A, B = mesh.vertices[mesh.faces[f]]
        x = A + s[:, None] * (B - A)
        e = np.full(3, mesh.face_left[f])
        d = (z.velocity(e, x, check=False) - zI.velocity(e, x, check=False)) @ mesh.face_normal[f]
        assert abs(wq @ d) <= 1e-12 * (1 + np.abs(z.u).max())


# -- indicators ------------------------------------------------------------------

def test_patch_test_indicators_vanish():
    step, _ = step_on("manufactured_affine", 2)
    scale = np.abs(step.adjoint_solution.u).max()
    assert np.abs(step.indicators.components).max() <= 1e-12 * scale
    assert abs(dwr.global_estimate(step.indicators)) <= 1e-12 * scale


def test_mass_conservation_term_vanishes_for_constant_source():
    step, _ = step_on("example_II", 2)
    comp = step.indicators.components
    assert np.abs(comp[:, 2]).max() <= 1e-12 * np.abs(comp).max()


def test_jump_term_hand_value(square):
    """Unit pressure jump and z~.n = 1 on the diagonal: each side gets half the length."""
    prob = fem.ProblemSpec({0: fem.Material(np.eye(2))}, lambda x, y: 0 * x,
                           lambda x, y: 0 * x, {"dirichlet": "neumann"})
    V = fem.build_space(square, 0, prob)
    f = int(np.flatnonzero(square.face_right >= 0)[0])
    n = square.face_normal[f]
    z = fem.MixedSolution(V, V.interpolate(lambda e, X: np.broadcast_to(n, X.shape)),
                          np.zeros(V.n_pr))
    p = np.zeros(V.n_pr)
    p[square.face_left[f]] = 1.0
    primal = fem.MixedSolution(V, np.zeros(V.n_vel), p)
    zero = fem.MixedSolution(V, np.zeros(V.n_vel), np.zeros(V.n_pr))
    ind = dwr.compute_indicators(primal, z, zero, prob)
    assert np.allclose(ind.components[:, 3], 0.5 * square.face_length[f], rtol=1e-14)
    assert np.all(ind.components[:, :3] == 0.0)


def test_indicator_set_totals():
    comp = np.arange(12.0).reshape(3, 4)
    ind = dwr.IndicatorSet(comp)
    assert np.array_equal(ind.eta, comp.sum(axis=1))
    assert ind.totals == {"BC": 12.0, "DL": 15.0, "CM": 18.0, "PR": 21.0}
    assert ind.estimate == 66.0
    assert dwr.global_estimate(dwr.IndicatorSet(np.zeros((4, 4)))) == 0.0


@pytest.mark.parametrize("name, levels, k", [
    ("example_I", 0, 0), ("example_I", 3, 0), ("example_I", 2, 1),
    ("example_II", 0, 0), ("example_II", 3, 0), ("manufactured_affine", 1, 0),
])
def test_localization_identity(name, levels, k):
    step, prob = step_on(name, levels, k)
    defect, est, R = dwr.localization_defect(step.primal, step.adjoint_solution,
                                             step.interpolant, prob)
    assert defect <= 1e-12


def test_localization_identity_on_adaptive_meshes():
    cfg = shipped("example_II")
    prob = cfg.problem_spec()
    res = run_loop(cfg.build_mesh(), prob, "adaptive", 0.1, max_iters=5)
    assert res.error is None
    for s in res.steps:
        defect, _, _ = dwr.localization_defect(s.primal, s.adjoint_solution, s.interpolant, prob)
        assert defect <= 1e-12


def test_galerkin_orthogonality_of_residual():
    """R_h(v_h, q_h) vanishes on 20 random members of the primal space."""
    step, prob = step_on("example_I", 2)
    V = step.primal.space
    zero = fem.MixedSolution(V, np.zeros(V.n_vel), np.zeros(V.n_pr))
    rng = np.random.default_rng(11)
    for _ in range(20):
        v = random_solution(V, rng)
        R, scale = dwr.global_residual(step.primal, v, zero, prob, return_scale=True)
        assert abs(R) <= 1e-10 * scale


@pytest.mark.parametrize("name, levels", [("example_I", 5), ("example_II", 4)])
def test_indicator_support_near_path(name, levels):
    """Share of sum |eta| within one layer of the path on the finest uniform mesh."""
    step, _ = step_on(name, levels)
    eta = np.abs(step.indicators.eta)
    near = np.array(sorted(path_adjacent(step.mesh, step.trajectory)))
    # measured 0.988 (example_I, 8320 DOFs) and 0.972 (example_II, 4192 DOFs)
    assert eta[near].sum() / eta.sum() >= 0.8


# -- effectivity -----------------------------------------------------------------

def test_effectivity():
    assert dwr.effectivity(0.3, 0.3) == 1.0
    assert dwr.effectivity(-8.274e-3, -8.476e-3) == pytest.approx(0.976, abs=5e-4)
    assert dwr.effectivity(1.188e-3, 1.719e-3) == pytest.approx(0.691, abs=5e-4)
    with pytest.raises(ValueError, match="zero"):
        dwr.effectivity(1.0, 0.0)


def test_effectivity_example_I_uniform():
    cfg = shipped("example_I")
    res = run_loop(cfg.build_mesh(), cfg.problem_spec(), "uniform", max_iters=6, keep=False)
    theta = [dwr.effectivity(cfg.exact_travel_time - s.travel_time, s.estimate)
             for s in res.steps]
    assert all(0.9 <= t <= 1.12 for t in theta[2:])


def test_crossed_square_start_regression():
    """Uniform run from the crossed square: DOFs, errors and estimates to four digits."""
    expected = [(20, -8.274e-3, -8.476e-3), (72, 1.358e-3, 1.360e-3),
                (272, -3.155e-5, -2.818e-5), (1056, -1.894e-5, -1.899e-5),
                (4160, -2.085e-6, -2.084e-6), (16512, -9.310e-7, -9.308e-7)]
    cfg = shipped("example_I_crossed")
    res = run_loop(cfg.build_mesh(), cfg.problem_spec(), "uniform", max_iters=6, keep=False)
    assert len(res.steps) == 6
    for s, (n, err, est) in zip(res.steps, expected):
        assert s.ndofs == n
        assert f"{cfg.exact_travel_time - s.travel_time:.3e}" == f"{err:.3e}"
        assert f"{s.estimate:.3e}" == f"{est:.3e}"
