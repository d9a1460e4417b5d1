"""Goal-oriented (dual-weighted residual) error estimation for the travel time.

The discrete adjoint ``(z_h, r_h)`` lives in the next-higher mixed space on
the same mesh and solves the transposed system (which is the same symmetric
matrix) with the travel-time derivative as right-hand side. The weights
``z_h - z_I`` and ``r_h - r_I`` use the canonical BDM interpolant and the
elementwise L2 projection into the primal space.

Element indicators (``n`` the outward normal of the element)::

    BC = sum_{F Dirichlet} int_F (z~.n) (p_h - g_D)
    DL = -int_K (K^-1 u_h + grad p_h) . z~
    CM =  int_K r~ (div u_h - f)
    PR = 1/2 sum_{F interior} int_F (z~.n) (p_h|K - p_h|K')
"""

from dataclasses import dataclass

import numpy as np

from .darcy_fem import FACE_POINTS, MixedSolution
from .quadrature import gauss_interval

COMPONENTS = ("BC", "DL", "CM", "PR")


def assemble_adjoint_rhs(space_W, adj, porosity, order=5):
    """Travel-time derivative against every basis function of ``space_W``.

    Entry j is ``T'[u_T](phi_j / phi)``; pressure entries are zero.
    """
    if adj.trajectory.mesh is not space_W.mesh:
        raise ValueError("adjoint trajectory and space live on different meshes")
    porosity = np.asarray(porosity, dtype=float)
    rhs = np.zeros(space_W.ndofs)
    for e, t, X, Z, wt in adj.quadrature(order):
        phi, _ = space_W.basis(np.array([e]), X[None])
        contrib = np.einsum("q,qc,qcj->j", wt, Z, phi[0]) / porosity[e]
        np.add.at(rhs, space_W.elem_dofs[e], contrib)
    return rhs


def solve_discrete_adjoint(system_W, rhs):
    """Solve with the (symmetric) primal matrix of the enriched space."""
    rhs = np.asarray(rhs, dtype=float)
    x = system_W.expand(system_W.solve_reduced(rhs[system_W.free]))
    nv = system_W.space.n_vel
    return MixedSolution(system_W.space, x[:nv], x[nv:])


def interpolate_adjoint(adj_sol, primal_space):
    """``(z_I, r_I)`` as a :class:`MixedSolution` in the primal space.

    Face moments of order <= k+1 are shared by both BDM spaces, so they are
    copied; interior moments (if any) and the pressure projection use
    quadrature.
    """
    W = adj_sol.space
    V = primal_space
    if W.mesh is not V.mesh:
        raise ValueError("spaces live on different meshes")

    def zfun(elements, X):
        shp = X.shape
        el = np.broadcast_to(np.asarray(elements)[:, None], shp[:-1]).ravel()
        return adj_sol.velocity(el, X.reshape(-1, 2), check=False).reshape(shp)

    def rfun(elements, X):
        shp = X.shape
        el = np.broadcast_to(np.asarray(elements)[:, None], shp[:-1]).ravel()
        return adj_sol.pressure(el, X.reshape(-1, 2)).reshape(shp[:-1])

    zI = V.interpolate(zfun)
    nf = V.mesh.n_faces
    zI[:V.n_face_dofs] = adj_sol.u[:W.n_face_dofs].reshape(nf, W.nfd)[:, :V.nfd].ravel()
    zI[V.constrained] = 0.0
    rI = V.project_pressure(rfun)
    return MixedSolution(V, zI, rI)


@dataclass
class IndicatorSet:
    """Signed indicator components per element, shape (ne, 4)."""

    components: np.ndarray

    @property
    def eta(self):
        return self.components.sum(axis=1)

    @property
    def totals(self):
        return dict(zip(COMPONENTS, self.components.sum(axis=0)))

    @property
    def estimate(self):
        return float(self.components.sum())


def _volume_data(primal, adj_sol, interp, problem):
    space = primal.space
    mesh = space.mesh
    ne = mesh.n_elements
    X, wJ = space.quadrature()
    nq = X.shape[1]
    el = np.repeat(np.arange(ne), nq)
    x = X.reshape(-1, 2)
    zt = (adj_sol.velocity(el, x, check=False) - interp.velocity(el, x, check=False)).reshape(ne, nq, 2)
    rt = (adj_sol.pressure(el, x) - interp.pressure(el, x)).reshape(ne, nq)
    Kinv, _ = problem.material_arrays(mesh)
    u = primal.velocity(el, x, check=False).reshape(ne, nq, 2)
    f = np.asarray(problem.source(X[..., 0], X[..., 1]), dtype=float) * np.ones((ne, nq))
    return el, x, X, wJ, zt, rt, Kinv, u, f


def _face_points(mesh):
    s, w = gauss_interval(FACE_POINTS)
    A = mesh.vertices[mesh.faces[:, 0]]
    B = mesh.vertices[mesh.faces[:, 1]]
    X = A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]
    return X, w[None, :] * mesh.face_length[:, None]


def _face_weights(primal, adj_sol, interp):
    """z~.n (n the stored face normal) at face Gauss points, from the left element."""
    mesh = primal.space.mesh
    X, w = _face_points(mesh)
    nfq = X.shape[1]
    left = np.repeat(mesh.face_left, nfq)
    x = X.reshape(-1, 2)
    zt = adj_sol.velocity(left, x, check=False) - interp.velocity(left, x, check=False)
    ztn = np.einsum("fqc,fc->fq", zt.reshape(-1, nfq, 2), mesh.face_normal)
    return X, w, ztn


def _dirichlet_faces(mesh, problem):
    return np.array([f for f in mesh.boundary_faces if problem.is_dirichlet(mesh.face_tag[f])],
                    dtype=np.int64)


def compute_indicators(primal, adj_sol, interp, problem, return_scale=False):
    """Elementwise indicator components (BC, DL, CM, PR).

    With ``return_scale`` the sum of the absolute values of all quadrature
    contributions is returned as well (see :func:`global_residual`).
    """
    space = primal.space
    mesh = space.mesh
    ne = mesh.n_elements
    out = np.zeros((ne, 4))
    el, x, X, wJ, zt, rt, Kinv, u, f = _volume_data(primal, adj_sol, interp, problem)
    nq = X.shape[1]
    gp = primal.pressure_gradient(el, x).reshape(ne, nq, 2)
    terms = [wJ * np.einsum("eqc,eqc->eq", np.einsum("ecd,eqd->eqc", Kinv, u), zt),
             wJ * np.einsum("eqc,eqc->eq", gp, zt)]
    out[:, 1] = -np.sum(terms[0] + terms[1], axis=1)
    div = primal.divergence(el, x).reshape(ne, nq)
    terms += [wJ * rt * div, wJ * rt * f]
    out[:, 2] = np.sum(terms[2] - terms[3], axis=1)

    FX, Fw, ztn = _face_weights(primal, adj_sol, interp)
    nfq = FX.shape[1]
    dfaces = _dirichlet_faces(mesh, problem)
    if len(dfaces):
        e = mesh.face_left[dfaces]
        xq = FX[dfaces].reshape(-1, 2)
        p = primal.pressure(np.repeat(e, nfq), xq).reshape(-1, nfq)
        g = np.asarray(problem.dirichlet_data(FX[dfaces, :, 0], FX[dfaces, :, 1]),
                       dtype=float) * np.ones_like(p)
        terms += [Fw[dfaces] * ztn[dfaces] * p, Fw[dfaces] * ztn[dfaces] * g]
        np.add.at(out[:, 0], e, np.sum(terms[-2] - terms[-1], axis=1))
    inner = np.flatnonzero(mesh.face_right >= 0)
    if len(inner):
        L, R = mesh.face_left[inner], mesh.face_right[inner]
        xq = FX[inner].reshape(-1, 2)
        pL = primal.pressure(np.repeat(L, nfq), xq).reshape(-1, nfq)
        pR = primal.pressure(np.repeat(R, nfq), xq).reshape(-1, nfq)
        # the stored normal is outward for L and inward for R; both halves agree
        half = 0.5 * np.sum(Fw[inner] * ztn[inner] * (pL - pR), axis=1)
        np.add.at(out[:, 3], L, half)
        np.add.at(out[:, 3], R, half)
        terms += [Fw[inner] * ztn[inner] * pL, Fw[inner] * ztn[inner] * pR]
    if return_scale:
        return IndicatorSet(out), float(sum(np.sum(np.abs(t)) for t in terms))
    return IndicatorSet(out)


def global_estimate(ind):
    return ind.estimate


def global_residual(primal, adj_sol, interp, problem, return_scale=False):
    """Residual ``L(z~, r~) - A((u_h, p_h), (z~, r~))`` evaluated globally.

    Every term is integrated as it appears in the weak form, without the
    element-wise integration by parts the indicators rely on. With
    ``return_scale`` the sum of the absolute values of all quadrature
    contributions is returned as well; it bounds the attainable floating
    point agreement between this value and the summed indicators.
    """
    mesh = primal.space.mesh
    ne = mesh.n_elements
    el, x, X, wJ, zt, rt, Kinv, u, f = _volume_data(primal, adj_sol, interp, problem)
    nq = X.shape[1]
    p = primal.pressure(el, x).reshape(ne, nq)
    div_z = (adj_sol.divergence(el, x) - interp.divergence(el, x)).reshape(ne, nq)
    div_u = primal.divergence(el, x).reshape(ne, nq)
    terms = [-wJ * f * rt, -wJ * np.einsum("eqc,ecd,eqd->eq", zt, Kinv, u),
             wJ * p * div_z, wJ * rt * div_u]
    FX, Fw, ztn = _face_weights(primal, adj_sol, interp)
    dfaces = _dirichlet_faces(mesh, problem)
    if len(dfaces):
        g = np.asarray(problem.dirichlet_data(FX[dfaces, :, 0], FX[dfaces, :, 1]),
                       dtype=float) * np.ones(FX.shape[1])
        terms.append(-Fw[dfaces] * ztn[dfaces] * g)
    total = float(sum(np.sum(t) for t in terms))
    if return_scale:
        return total, float(sum(np.sum(np.abs(t)) for t in terms))
    return total


def localization_defect(primal, adj_sol, interp, problem):
    """Relative gap between the summed indicators and the global residual.

    The gap is divided by the largest of ``|R|`` and the two absolute
    quadrature sums, the level at which floating point cancellation enters.
    Returns ``(defect, estimate, residual)``.
    """
    ind, s_ind = compute_indicators(primal, adj_sol, interp, problem, return_scale=True)
    R, s_res = global_residual(primal, adj_sol, interp, problem, return_scale=True)
    est = ind.estimate
    return abs(est - R) / max(abs(R), s_ind, s_res), est, R


def effectivity(error, estimate):
    """Effectivity index ``error / estimate``; undefined for a zero estimate."""
    if estimate == 0.0:
        raise ValueError("effectivity undefined: zero error estimate")
    return error / estimate
