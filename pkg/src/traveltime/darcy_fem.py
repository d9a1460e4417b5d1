"""Mixed finite elements for Darcy flow.

Velocity lives in BDM_{k+1} (H(div)-conforming), head/pressure in
discontinuous P_k. The weak form reads: find (u, p) with

    int K^-1 u.v - int p div v = -<v.n, g_D>_D     for all v
                 - int q div u = -int f q         for all q

with v.n = 0 on Neumann faces imposed by removing those degrees of freedom.

Local bases are built directly in physical coordinates. On every element the
polynomial space is spanned by scaled monomials of ``xi = (x - xc)/h`` and
``eta = (y - yc)/h``; the nodal basis is the dual basis of the degrees of
freedom, obtained by inverting the element's functional matrix. The face
functionals use the *global* face normal and the global face parametrization,
so a face DOF means the same thing from both neighbours and normal continuity
holds without any orientation bookkeeping.

Velocity DOFs for BDM_r on an element:

* per face f and j = 0..r: ``int_0^1 (v.n_f)(x(s)) L_j(s) ds`` with ``x(s)``
  running from the first to the second stored face vertex and ``L_j`` the
  Legendre polynomial shifted to [0, 1];
* for r >= 2, interior moments ``|K|^-1 int v.q`` against the first-kind
  Nedelec space of degree r - 1.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigError, NumericalError, PointLocationError, SingularSystemError
from .mesh import barycentric
from .quadrature import gauss_interval, legendre, triangle_rule

MAX_ORDER = 2  # internal limit; primal orders exposed to users are 0 and 1
VOLUME_DEGREE = 9  # collapsed Gauss rule used for all element integrals
FACE_POINTS = 6  # Gauss points per face for data terms
RESIDUAL_TOL = 1e-10
_CHUNK = 4096


# --------------------------------------------------------------------------
# problem data


@dataclass(frozen=True)
class Material:
    """Region-wise constant conductivity tensor and porosity."""

    K: np.ndarray
    porosity: float = 1.0
    provenance: str = ""

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 0:
            K = K * np.eye(2)
        if K.shape != (2, 2):
            raise ConfigError("conductivity must be a scalar or a 2x2 tensor")
        if not np.array_equal(K, K.T):
            raise ConfigError("conductivity tensor must be symmetric")
        lam = np.linalg.eigvalsh(K)
        if not lam[0] > 0.0:
            raise ConfigError(f"conductivity tensor is not positive definite (eigenvalues {lam})")
        if not 0.0 < self.porosity <= 1.0:
            raise ConfigError(f"porosity {self.porosity} outside (0, 1]")
        K.flags.writeable = False
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "porosity", float(self.porosity))


@dataclass(frozen=True)
class ProblemSpec:
    """Data of a steady Darcy problem.

    Parameters
    ----------
    materials : dict
        Region id -> :class:`Material`.
    source, dirichlet_data : callable
        Vectorized ``f(x, y)`` and ``g_D(x, y)``.
    boundary : dict
        Boundary tag -> ``"dirichlet"`` or ``"neumann"``.
    release_point : tuple
    """

    materials: dict
    source: object
    dirichlet_data: object
    boundary: dict
    release_point: tuple = (0.0, 0.0)
    name: str = ""

    def __post_init__(self):
        for tag, kind in self.boundary.items():
            if kind not in ("dirichlet", "neumann"):
                raise ConfigError(f"boundary tag {tag!r} has unknown kind {kind!r}")

    def is_dirichlet(self, tag):
        kind = self.boundary.get(tag)
        if kind is None:
            raise ConfigError(f"boundary tag {tag!r} has no boundary condition")
        return kind == "dirichlet"

    def material_arrays(self, mesh):
        """Per-element inverse conductivity and porosity."""
        regions = np.unique(mesh.element_region)
        missing = [int(r) for r in regions if int(r) not in self.materials]
        if missing:
            raise ConfigError(f"mesh regions {missing} have no material data")
        Kinv = np.empty((mesh.n_elements, 2, 2))
        phi = np.empty(mesh.n_elements)
        for r in regions:
            mat = self.materials[int(r)]
            sel = mesh.element_region == r
            Kinv[sel] = np.linalg.inv(mat.K)
            phi[sel] = mat.porosity
        return Kinv, phi


# --------------------------------------------------------------------------
# polynomial helpers


def exponents(d):
    """Exponent pairs of the monomials of total degree <= d."""
    return [(n - b, b) for n in range(d + 1) for b in range(n + 1)]


def monomials(xi, eta, exps):
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return np.stack([xi**a * eta**b for a, b in exps], axis=-1)


def monomial_gradients(xi, eta, exps):
    """Derivatives with respect to xi and eta, shape (..., nm, 2)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    dx = [a * xi ** max(a - 1, 0) * eta**b if a else np.zeros_like(xi) for a, b in exps]
    dy = [b * xi**a * eta ** max(b - 1, 0) if b else np.zeros_like(xi) for a, b in exps]
    return np.stack([np.stack(dx, axis=-1), np.stack(dy, axis=-1)], axis=-1)


def _nedelec_tests(r, xi, eta):
    """Interior test functions of BDM_r, shape (..., n_int, 2)."""
    if r < 2:
        return np.zeros(np.shape(xi) + (0, 2))
    base = monomials(xi, eta, exponents(r - 2))
    zero = np.zeros_like(base)
    fns = [np.stack([base, zero], axis=-1), np.stack([zero, base], axis=-1)]
    top = monomials(xi, eta, [(r - 2 - b, b) for b in range(r - 1)])
    fns.append(np.stack([-eta[..., None] * top, xi[..., None] * top], axis=-1))
    return np.concatenate(fns, axis=-2)


# --------------------------------------------------------------------------
# discrete spaces


@dataclass(eq=False)
class MixedSpace:
    """BDM_{k+1} x P_k^disc on a mesh.

    Attributes
    ----------
    n_vel, n_pr : int
        Velocity and pressure DOF counts (velocity includes constrained ones).
    elem_dofs : ndarray, shape (ne, nloc)
        Global velocity DOFs of each element: face moments of local edges 0..2
        followed by the interior moments.
    C : ndarray, shape (ne, 2*nm, nloc)
        Monomial coefficients of the local basis: component ``c`` of basis
        function ``j`` is ``sum_m C[e, c*nm + m, j] * mono_m``.
    """

    mesh: object
    k: int
    constrained: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.k not in range(MAX_ORDER + 1):
            raise ValueError(f"unsupported order {self.k}")
        mesh = self.mesh
        r = self.r = self.k + 1
        self.vexp = exponents(r)
        self.pexp = exponents(self.k)
        self.nm = len(self.vexp)
        self.npl = len(self.pexp)
        self.nfd = r + 1
        self.nint = (r + 1) * (r - 1)
        self.nloc = 3 * self.nfd + self.nint
        ne = mesh.n_elements
        self.n_face_dofs = mesh.n_faces * self.nfd
        self.n_vel = self.n_face_dofs + ne * self.nint
        self.n_pr = ne * self.npl
        face = mesh.element_faces[:, :, None] * self.nfd + np.arange(self.nfd)
        interior = self.n_face_dofs + np.arange(ne)[:, None] * self.nint + np.arange(self.nint)
        self.elem_dofs = np.concatenate([face.reshape(ne, -1), interior], axis=1)
        self.center = mesh.centroid
        self.h = mesh.diameter
        if self.constrained is None:
            self.constrained = np.zeros(self.n_vel, dtype=bool)
        self.C = np.linalg.inv(self._functional_matrix())

    @property
    def ndofs(self):
        return self.n_vel + self.n_pr

    def local_coords(self, elements, x):
        x = np.asarray(x, dtype=float)
        c = self.center[elements]
        h = self.h[elements]
        return (x[..., 0] - c[..., 0]) / h, (x[..., 1] - c[..., 1]) / h

    def _functional_matrix(self):
        mesh = self.mesh
        r, nm, ne = self.r, self.nm, mesh.n_elements
        D = np.zeros((ne, self.nloc, 2, nm))
        s, w = gauss_interval(r + 2)
        L = np.stack([legendre(j, s) for j in range(self.nfd)])  # (nfd, nq)
        all_e = np.arange(ne)
        for i in range(3):
            f = mesh.element_faces[:, i]
            A = mesh.vertices[mesh.faces[f, 0]]
            B = mesh.vertices[mesh.faces[f, 1]]
            X = A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]
            xi, eta = self.local_coords(all_e[:, None], X)
            mono = monomials(xi, eta, self.vexp)  # (ne, nq, nm)
            mom = np.einsum("q,jq,eqm->ejm", w, L, mono)
            n = mesh.face_normal[f]
            D[:, i * self.nfd:(i + 1) * self.nfd] = mom[:, :, None, :] * n[:, None, :, None]
        if self.nint:
            pts, wq = triangle_rule(2 * r)
            X = self._physical(pts)
            xi, eta = self.local_coords(all_e[:, None], X)
            mono = monomials(xi, eta, self.vexp)
            q = _nedelec_tests(r, xi, eta)  # (ne, nq, nint, 2)
            # |K|^-1 int = 2 * sum over reference weights
            D[:, 3 * self.nfd:] = 2.0 * np.einsum("q,eqlc,eqm->elcm", wq, q, mono)
        return D.reshape(ne, self.nloc, 2 * nm)

    def _physical(self, ref_pts, elements=None):
        p = self.mesh.vertices[self.mesh.triangles if elements is None
                               else self.mesh.triangles[elements]]
        ref_pts = np.asarray(ref_pts)
        return (p[:, None, 0, :] + ref_pts[None, :, 0, None] * (p[:, None, 1, :] - p[:, None, 0, :])
                + ref_pts[None, :, 1, None] * (p[:, None, 2, :] - p[:, None, 0, :]))

    # -- basis evaluation ---------------------------------------------------

    def basis(self, elements, x):
        """Velocity basis values and divergences at points.

        Parameters
        ----------
        elements : ndarray, shape (n,)
        x : ndarray, shape (n, nq, 2)

        Returns
        -------
        phi : ndarray, shape (n, nq, 2, nloc)
        div : ndarray, shape (n, nq, nloc)
        """
        xi, eta = self.local_coords(np.asarray(elements)[:, None], x)
        mono = monomials(xi, eta, self.vexp)
        grad = monomial_gradients(xi, eta, self.vexp)
        C = self.C[elements].reshape(len(elements), 2, self.nm, self.nloc)
        phi = np.einsum("eqm,ecmj->eqcj", mono, C)
        hinv = 1.0 / self.h[elements]
        div = (np.einsum("eqm,emj->eqj", grad[..., 0], C[:, 0])
               + np.einsum("eqm,emj->eqj", grad[..., 1], C[:, 1])) * hinv[:, None, None]
        return phi, div

    def pressure_basis(self, elements, x):
        xi, eta = self.local_coords(np.asarray(elements)[:, None], x)
        return monomials(xi, eta, self.pexp)

    def quadrature(self, elements=None, degree=VOLUME_DEGREE):
        """Physical quadrature points and weights (including the Jacobian)."""
        pts, w = triangle_rule(degree)
        X = self._physical(pts, elements)
        area = self.mesh.area if elements is None else self.mesh.area[elements]
        return X, 2.0 * area[:, None] * w[None, :]

    # -- interpolation ------------------------------------------------------

    def interpolate(self, func):
        """Canonical (DOF) interpolant of a vector field.

        ``func(elements, x)`` takes element indices of shape (n,) and points of
        shape (n, nq, 2) and returns values of shape (n, nq, 2). Face moments are
        taken from the left element of each face.
        """
        mesh = self.mesh
        coef = np.zeros(self.n_vel)
        s, w = gauss_interval(FACE_POINTS)
        L = np.stack([legendre(j, s) for j in range(self.nfd)])
        A = mesh.vertices[mesh.faces[:, 0]]
        B = mesh.vertices[mesh.faces[:, 1]]
        X = A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]
        vals = func(mesh.face_left, X)
        un = np.einsum("fqc,fc->fq", vals, mesh.face_normal)
        coef[:self.n_face_dofs] = np.einsum("q,jq,fq->fj", w, L, un).ravel()
        if self.nint:
            X, wJ = self.quadrature()
            xi, eta = self.local_coords(np.arange(mesh.n_elements)[:, None], X)
            q = _nedelec_tests(self.r, xi, eta)
            vals = func(np.arange(mesh.n_elements), X)
            mom = np.einsum("eq,eqlc,eqc->el", wJ, q, vals) / mesh.area[:, None]
            coef[self.n_face_dofs:] = mom.ravel()
        return coef

    def project_pressure(self, func):
        """Elementwise L2 projection of ``func(elements, x)`` onto P_k."""
        X, wJ = self.quadrature()
        ne = self.mesh.n_elements
        psi = self.pressure_basis(np.arange(ne), X)
        M = np.einsum("eq,eqa,eqb->eab", wJ, psi, psi)
        rhs = np.einsum("eq,eqa,eq->ea", wJ, psi, func(np.arange(ne), X))
        return np.linalg.solve(M, rhs[..., None])[..., 0].ravel()


def build_space(mesh, k, problem=None):
    """Mixed space of order ``k`` with Neumann face DOFs constrained.

    Without a problem every boundary face is treated as Dirichlet (no
    constraints).
    """
    if k not in (0, 1, 2):
        raise ValueError(f"unsupported order {k}")
    space = MixedSpace(mesh, k)
    if problem is not None:
        nfd = space.nfd
        for f in mesh.boundary_faces:
            if not problem.is_dirichlet(mesh.face_tag[f]):
                space.constrained[f * nfd:(f + 1) * nfd] = True
    return space


# --------------------------------------------------------------------------
# assembly and solution


@dataclass(eq=False)
class SaddleSystem:
    """Reduced saddle-point system ``[[A, B^T], [B, 0]] x = b``.

    ``matrix`` and ``rhs`` are restricted to the free DOFs (``free`` indexes the
    full vector of length n_vel + n_pr).
    """

    space: MixedSpace
    matrix: sp.csc_matrix
    rhs: np.ndarray
    free: np.ndarray
    A: sp.csr_matrix = None
    B: sp.csr_matrix = None
    _lu: object = field(default=None, repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    def factor(self):
        if self._lu is None:
            try:
                self._lu = splu(sp.csc_matrix(self.matrix))
            except RuntimeError as exc:
                raise SingularSystemError(f"saddle-point factorization failed: {exc}") from exc
            d = np.abs(self._lu.U.diagonal())
            if d.size and (d.min() <= 1e-14 * d.max() or not np.all(np.isfinite(d))):
                raise SingularSystemError(
                    f"numerically singular system: pivot ratio {d.min() / d.max():.3e}")
        return self._lu

    def solve_reduced(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        lu = self.factor()
        nb = np.linalg.norm(rhs)
        if nb == 0.0:
            return np.zeros_like(rhs)
        x = lu.solve(rhs)
        res = rhs - self.matrix @ x
        for _ in range(2):
            if np.linalg.norm(res) <= 1e-14 * nb:
                break
            x = x + lu.solve(res)
            res = rhs - self.matrix @ x
        rel = np.linalg.norm(res) / nb
        if not np.isfinite(rel) or rel > RESIDUAL_TOL:
            raise NumericalError(f"linear solve residual {rel:.3e} exceeds {RESIDUAL_TOL}")
        return x

    def expand(self, x_reduced):
        full = np.zeros(self.space.ndofs)
        full[self.free] = x_reduced
        return full


def _element_matrices(space, Kinv, f, elems):
    X, wJ = space.quadrature(elems)
    phi, div = space.basis(elems, X)
    psi = space.pressure_basis(elems, X)
    A = np.einsum("eq,eqcj,ecd,eqdi->eji", wJ, phi, Kinv[elems], phi)
    B = -np.einsum("eq,eqa,eqj->eaj", wJ, psi, div)
    F = -np.einsum("eq,eqa,eq->ea", wJ, psi, f(X[..., 0], X[..., 1]))
    return A, B, F


def dirichlet_load(space, problem):
    """Velocity load vector ``G(v) = -<v.n, g_D>`` on Dirichlet faces."""
    mesh = space.mesh
    G = np.zeros(space.n_vel)
    s, w = gauss_interval(FACE_POINTS)
    for f in mesh.boundary_faces:
        if not problem.is_dirichlet(mesh.face_tag[f]):
            continue
        A, B = mesh.vertices[mesh.faces[f]]
        X = A + s[:, None] * (B - A)
        g = np.asarray(problem.dirichlet_data(X[:, 0], X[:, 1]), dtype=float) * np.ones(len(s))
        for j in range(space.nfd):
            G[f * space.nfd + j] = -mesh.face_length[f] * (2 * j + 1) * np.sum(
                w * legendre(j, s) * g)
    return G


def assemble(space, problem):
    """Assemble the reduced symmetric saddle-point system."""
    mesh = space.mesh
    Kinv, _ = problem.material_arrays(mesh)
    ne, nloc, npl = mesh.n_elements, space.nloc, space.npl
    rows_a, cols_a, vals_a = [], [], []
    rows_b, cols_b, vals_b = [], [], []
    F = np.zeros(space.n_pr)
    pdofs = np.arange(ne)[:, None] * npl + np.arange(npl)
    for start in range(0, ne, _CHUNK):
        elems = np.arange(start, min(ne, start + _CHUNK))
        Ae, Be, Fe = _element_matrices(space, Kinv, problem.source, elems)
        vd = space.elem_dofs[elems]
        pd = pdofs[elems]
        rows_a.append(np.repeat(vd, nloc, axis=1).ravel())
        cols_a.append(np.tile(vd, (1, nloc)).ravel())
        vals_a.append(Ae.ravel())
        rows_b.append(np.repeat(pd, nloc, axis=1).ravel())
        cols_b.append(np.tile(vd, (1, npl)).ravel())
        vals_b.append(Be.ravel())
        F[pd.ravel()] = Fe.ravel()
    nv, npr = space.n_vel, space.n_pr
    A = sp.coo_matrix((np.concatenate(vals_a), (np.concatenate(rows_a), np.concatenate(cols_a))),
                      shape=(nv, nv)).tocsr()
    A = (0.5 * (A + A.T)).tocsr()
    B = sp.coo_matrix((np.concatenate(vals_b), (np.concatenate(rows_b), np.concatenate(cols_b))),
                      shape=(npr, nv)).tocsr()
    M = sp.bmat([[A, B.T], [B, None]], format="csc")
    rhs = np.concatenate([dirichlet_load(space, problem), F])
    free = np.concatenate([np.flatnonzero(~space.constrained), nv + np.arange(npr)])
    Mr = M[free][:, free].tocsc()
    return SaddleSystem(space, Mr, rhs[free], free, A, B)


def solve(system):
    """Solve the primal system; the factorization stays cached on ``system``."""
    x = system.expand(system.solve_reduced(system.rhs))
    nv = system.space.n_vel
    return MixedSolution(system.space, x[:nv], x[nv:])


# --------------------------------------------------------------------------
# solutions


@dataclass(eq=False)
class MixedSolution:
    """Velocity and pressure coefficient vectors on a :class:`MixedSpace`."""

    space: MixedSpace
    u: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.u.shape != (self.space.n_vel,) or self.p.shape != (self.space.n_pr,):
            raise ValueError("coefficient lengths do not match the space")

    @cached_property
    def velocity_coefficients(self):
        """Monomial coefficients per element, shape (ne, 2, nm)."""
        s = self.space
        c = self.u[s.elem_dofs]
        return np.einsum("emj,ej->em", s.C, c).reshape(-1, 2, s.nm)

    @cached_property
    def pressure_coefficients(self):
        return self.p.reshape(-1, self.space.npl)

    def _check_inside(self, elements, x, tol=1e-10):
        lam = barycentric(self.space.mesh, elements, x)
        if np.any(lam < -tol):
            raise PointLocationError("evaluation point outside its element")

    def velocity(self, elements, x, check=True):
        """Evaluate u_h at points ``x`` (shape (n, 2)) of ``elements`` (shape (n,))."""
        elements = np.atleast_1d(np.asarray(elements))
        x = np.asarray(x, dtype=float).reshape(len(elements), 2)
        if check:
            self._check_inside(elements, x)
        xi, eta = self.space.local_coords(elements, x)
        mono = monomials(xi, eta, self.space.vexp)
        return np.einsum("ecm,em->ec", self.velocity_coefficients[elements], mono)

    def velocity_gradient(self, elements, x, check=True):
        """Jacobian ``G[c, d] = d u_c / d x_d``, shape (n, 2, 2)."""
        elements = np.atleast_1d(np.asarray(elements))
        x = np.asarray(x, dtype=float).reshape(len(elements), 2)
        if check:
            self._check_inside(elements, x)
        xi, eta = self.space.local_coords(elements, x)
        grad = monomial_gradients(xi, eta, self.space.vexp)
        G = np.einsum("ecm,emd->ecd", self.velocity_coefficients[elements], grad)
        return G / self.space.h[elements][:, None, None]

    def divergence(self, elements, x):
        G = self.velocity_gradient(elements, x, check=False)
        return G[:, 0, 0] + G[:, 1, 1]

    def pressure(self, elements, x):
        elements = np.atleast_1d(np.asarray(elements))
        x = np.asarray(x, dtype=float).reshape(len(elements), 2)
        xi, eta = self.space.local_coords(elements, x)
        mono = monomials(xi, eta, self.space.pexp)
        return np.einsum("ea,ea->e", self.pressure_coefficients[elements], mono)

    def pressure_gradient(self, elements, x):
        elements = np.atleast_1d(np.asarray(elements))
        x = np.asarray(x, dtype=float).reshape(len(elements), 2)
        xi, eta = self.space.local_coords(elements, x)
        grad = monomial_gradients(xi, eta, self.space.pexp)
        g = np.einsum("ea,ead->ed", self.pressure_coefficients[elements], grad)
        return g / self.space.h[elements][:, None]

    def affine_coefficients(self):
        """``(a, G)`` with ``u_h = a + G x`` on every element (order 0 only)."""
        if self.space.k != 0:
            raise ValueError("affine coefficients exist only for the lowest order")
        c = self.velocity_coefficients  # monomials 1, xi, eta
        h = self.space.h[:, None]
        G = np.stack([c[:, :, 1] / h, c[:, :, 2] / h], axis=-1)
        a = c[:, :, 0] - np.einsum("ecd,ed->ec", G, self.space.center)
        return a, G


def evaluate_velocity(sol, element, x):
    """u_h restricted to ``element`` at the point ``x``."""
    return sol.velocity([element], np.asarray(x, dtype=float)[None])[0]


def velocity_gradient(sol, element, x):
    return sol.velocity_gradient([element], np.asarray(x, dtype=float)[None])[0]


# --------------------------------------------------------------------------
# conformity and conservation checks


def normal_jumps(sol, npts=FACE_POINTS):
    """``|u_L.n - u_R.n|`` at Gauss points of every interior face, shape (nif, npts)."""
    mesh = sol.space.mesh
    inner = np.flatnonzero(mesh.face_right >= 0)
    s, _ = gauss_interval(npts)
    A = mesh.vertices[mesh.faces[inner, 0]]
    B = mesh.vertices[mesh.faces[inner, 1]]
    X = (A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]).reshape(-1, 2)
    uL = sol.velocity(np.repeat(mesh.face_left[inner], npts), X, check=False)
    uR = sol.velocity(np.repeat(mesh.face_right[inner], npts), X, check=False)
    n = np.repeat(mesh.face_normal[inner], npts, axis=0)
    return np.abs(np.einsum("qc,qc->q", uL - uR, n)).reshape(-1, npts)


def mass_defects(sol, problem):
    """Per-element ``int_K (div u_h - f)``."""
    space = sol.space
    ne = space.mesh.n_elements
    X, wJ = space.quadrature()
    el = np.repeat(np.arange(ne), X.shape[1])
    div = sol.divergence(el, X.reshape(-1, 2)).reshape(ne, -1)
    f = np.asarray(problem.source(X[..., 0], X[..., 1]), dtype=float) * np.ones_like(div)
    return np.sum(wJ * (div - f), axis=1)
