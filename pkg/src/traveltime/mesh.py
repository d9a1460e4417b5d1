"""Conforming triangular meshes with red-green refinement.

A :class:`Mesh` is immutable: :func:`refine` returns a new mesh. Faces are
derived from the triangle list on construction. Each face stores its two
vertices in the counter-clockwise order of its *left* element (the lower
indexed neighbour), so the stored unit normal points from left to right, and
outward for boundary faces.

Green closure discipline: a green (bisected) element is never refined
itself. If it is marked, or one of its edges has to be split, its family is
replaced by the parent triangle, which is then red-refined.
"""

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError, PointLocationError

INSIDE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """Two-dimensional conforming simplicial mesh.

    Parameters
    ----------
    vertices : ndarray, shape (nv, 2)
    triangles : ndarray, shape (ne, 3)
        Vertex indices, counter-clockwise.
    element_region : ndarray, shape (ne,)
    boundary_tags : dict
        Maps a sorted vertex pair of every boundary face to a tag string.
    refinement_level, parent : ndarray, shape (ne,)
        ``parent[e]`` is the element of the previous mesh that ``e`` was cut
        from (itself if untouched), or -1 for an initial mesh.
    green_parent : ndarray, shape (ne, 3)
        Vertex triple of the bisected parent for green elements, else -1.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    element_region: np.ndarray
    boundary_tags: dict
    refinement_level: np.ndarray = None
    parent: np.ndarray = None
    green_parent: np.ndarray = None
    green_parent_info: dict = field(default_factory=dict)

    def __post_init__(self):
        ne = len(self.triangles)
        set_ = object.__setattr__
        set_(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float))
        set_(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        set_(self, "element_region", np.asarray(self.element_region, dtype=np.int64))
        if self.refinement_level is None:
            set_(self, "refinement_level", np.zeros(ne, dtype=np.int64))
        if self.parent is None:
            set_(self, "parent", -np.ones(ne, dtype=np.int64))
        if self.green_parent is None:
            set_(self, "green_parent", -np.ones((ne, 3), dtype=np.int64))
        for name in ("vertices", "triangles", "element_region", "refinement_level",
                     "parent", "green_parent"):
            getattr(self, name).flags.writeable = False
        self._build_geometry()
        self._build_faces()

    # -- construction helpers -------------------------------------------------

    def _build_geometry(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.any(area <= 0.0):
            bad = int(np.flatnonzero(area <= 0.0)[0])
            raise MeshError(f"inverted or degenerate triangle {bad}")
        object.__setattr__(self, "area", area)
        object.__setattr__(self, "centroid", p.mean(axis=1))
        edge_len = np.linalg.norm(p[:, [2, 0, 1]] - p[:, [1, 2, 0]], axis=2)
        object.__setattr__(self, "diameter", edge_len.max(axis=1))

    def _build_faces(self):
        tri = self.triangles
        ne = len(tri)
        # local edge i is opposite local vertex i
        a = tri[:, [1, 2, 0]].ravel()
        b = tri[:, [2, 0, 1]].ravel()
        key = np.minimum(a, b) * (len(self.vertices) + 1) + np.maximum(a, b)
        uniq, first, inverse, counts = np.unique(
            key, return_index=True, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: an edge is shared by more than two triangles")
        # number faces in order of first appearance so numbering follows elements
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        face_of_edge = rank[inverse]
        first = first[order]
        nf = len(first)
        faces = np.column_stack([a[first], b[first]])
        left = first // 3
        right = -np.ones(nf, dtype=np.int64)
        owner = np.arange(3 * ne) // 3
        second = np.ones(3 * ne, dtype=bool)
        second[first] = False
        right[face_of_edge[second]] = owner[second]
        # neighbours must traverse a shared edge in opposite directions
        if np.any(second):
            fa = a[second]
            fb = b[second]
            ff = face_of_edge[second]
            if np.any((faces[ff, 0] != fb) | (faces[ff, 1] != fa)):
                raise MeshError("inconsistent orientation between neighbouring triangles")
        element_faces = face_of_edge.reshape(ne, 3)
        element_face_sign = np.where(left[element_faces] == np.arange(ne)[:, None], 1.0, -1.0)

        d = self.vertices[faces[:, 1]] - self.vertices[faces[:, 0]]
        length = np.linalg.norm(d, axis=1)
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]

        boundary = right < 0
        tags = [None] * nf
        for f in np.flatnonzero(boundary):
            k = (min(faces[f]), max(faces[f]))
            tags[f] = self.boundary_tags.get(k)
            if tags[f] is None:
                raise MeshError(f"untagged boundary face {f} {tuple(faces[f])}")
        for arr in (faces, left, right, element_faces, element_face_sign, length, normal):
            arr.flags.writeable = False
        set_ = object.__setattr__
        set_(self, "faces", faces)
        set_(self, "face_left", left)
        set_(self, "face_right", right)
        set_(self, "face_tag", tuple(tags))
        set_(self, "face_length", length)
        set_(self, "face_normal", normal)
        set_(self, "element_faces", element_faces)
        set_(self, "element_face_sign", element_face_sign)
        set_(self, "boundary_faces", np.flatnonzero(boundary))

    # -- simple queries ----------------------------------------------------

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def element_vertices(self, e):
        return self.vertices[self.triangles[e]]

    def neighbor(self, e, local_edge):
        """Element across local edge ``local_edge`` of ``e`` or -1 on the boundary."""
        f = self.element_faces[e, local_edge]
        other = self.face_right[f] if self.face_left[f] == e else self.face_left[f]
        return int(other)

    def is_green(self, e):
        return self.green_parent[e, 0] >= 0

    def vertex_neighbors(self, elements):
        """Elements sharing at least one vertex with ``elements`` (inclusive)."""
        elements = np.unique(np.asarray(list(elements), dtype=np.int64))
        if len(elements) == 0:
            return elements
        verts = np.unique(self.triangles[elements])
        touch = np.isin(self.triangles, verts).any(axis=1)
        return np.flatnonzero(touch)


def _signed_area(p, q, r):
    return 0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))


def build_mesh(vertices, triangles, boundary_tagger, element_region=None):
    """Build a :class:`Mesh` and validate it.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    triangles : array_like, shape (ne, 3)
        Counter-clockwise vertex triples.
    boundary_tagger : callable
        ``boundary_tagger(midpoint, endpoints)`` returns the tag string of a
        boundary face, or None if the face cannot be tagged.
    element_region : array_like, optional
        Region id per element (default all zeros).

    Raises
    ------
    MeshError
        On inverted triangles, hanging nodes, holes or untagged boundary faces.
    """
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(triangles) == 0:
        raise MeshError("empty triangle list")
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        raise MeshError("triangle references a vertex that does not exist")
    if element_region is None:
        element_region = np.zeros(len(triangles), dtype=np.int64)

    # boundary edges: edges appearing once
    a = triangles[:, [1, 2, 0]].ravel()
    b = triangles[:, [2, 0, 1]].ravel()
    pairs = np.column_stack([np.minimum(a, b), np.maximum(a, b)])
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    tags = {}
    for i, j in uniq[counts == 1]:
        mid = 0.5 * (vertices[i] + vertices[j])
        tag = boundary_tagger(mid, (vertices[i], vertices[j]))
        if tag is None:
            raise MeshError(f"untagged boundary face ({i}, {j}) at {mid}")
        tags[(int(i), int(j))] = tag
    mesh = Mesh(vertices, triangles, element_region, tags)
    check_conforming(mesh)
    return mesh


def check_conforming(mesh):
    """Raise :class:`MeshError` unless ``mesh`` is a conforming triangulation of
    a simply connected polygon.

    Checks: every interior face has two neighbours, no vertex lies inside a
    boundary face (hanging node) and the boundary is a single closed loop.
    """
    bf = mesh.boundary_faces
    verts = mesh.vertices
    bverts = np.unique(mesh.faces[bf])
    P = verts[bverts]
    for f in bf:
        i, j = mesh.faces[f]
        A, B = verts[i], verts[j]
        d = B - A
        L2 = d @ d
        rel = P - A
        s = rel @ d / L2
        dist = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / math.sqrt(L2)
        hit = (s > 1e-12) & (s < 1 - 1e-12) & (dist <= 1e-12 * math.sqrt(L2))
        if np.any(hit):
            raise MeshError(f"non-conforming mesh: hanging node on face {f}")
    # boundary faces form exactly one cycle
    succ = {}
    for f in bf:
        i, j = mesh.faces[f]
        if i in succ:
            raise MeshError("non-conforming mesh: boundary is not a simple loop")
        succ[int(i)] = int(j)
    start = next(iter(succ))
    seen = 1
    cur = succ[start]
    while cur != start:
        if cur not in succ or seen > len(succ):
            raise MeshError("non-conforming mesh: boundary is not closed")
        cur = succ[cur]
        seen += 1
    if seen != len(succ):
        raise MeshError("non-conforming mesh: boundary has more than one loop (hole)")
    return True


def mark_fixed_fraction(indicators, fraction):
    """Select the ``ceil(fraction * N)`` elements of largest ``|indicator|``.

    Ties are broken by lower element index. All-zero indicators give an empty
    set.
    """
    eta = np.abs(np.asarray(indicators, dtype=float))
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if len(eta) == 0 or not np.any(eta > 0.0):
        return set()
    n = min(len(eta), max(1, math.ceil(fraction * len(eta) - 1e-9)))
    order = np.lexsort((np.arange(len(eta)), -eta))
    return set(int(i) for i in order[:n])


def _edge(i, j):
    return (i, j) if i < j else (j, i)


def _bisected_edge(verts, gp, m):
    vm = verts[m]
    for k in range(3):
        ed = _edge(gp[k], gp[(k + 1) % 3])
        va, vb = verts[ed[0]], verts[ed[1]]
        scale = 1.0 + abs(va[0]) + abs(va[1]) + abs(vb[0]) + abs(vb[1])
        if abs(va[0] + vb[0] - 2 * vm[0]) + abs(va[1] + vb[1] - 2 * vm[1]) < 1e-12 * scale:
            return ed
    raise MeshError("green family without a bisected parent edge")


def refine(mesh, marked):
    """Red-green refinement of the ``marked`` elements; returns a new mesh."""
    marked = set(int(e) for e in marked)
    if not marked:
        return mesh
    if min(marked) < 0 or max(marked) >= mesh.n_elements:
        raise ValueError("marked element out of range")

    verts = [tuple(v) for v in mesh.vertices.tolist()]
    # working triangles: id -> (verts, region, level, origin, green parent triple)
    work = {}
    for e, t in enumerate(mesh.triangles.tolist()):
        gp = tuple(int(v) for v in mesh.green_parent[e]) if mesh.green_parent[e, 0] >= 0 else None
        work[e] = (tuple(t), int(mesh.element_region[e]), int(mesh.refinement_level[e]), e, gp)
    families = defaultdict(list)
    for e, w in work.items():
        if w[4] is not None:
            families[w[4]].append(e)

    edge_elems = defaultdict(set)
    for tid, w in work.items():
        t = w[0]
        for k in range(3):
            edge_elems[_edge(t[k], t[(k + 1) % 3])].add(tid)

    midpoint = {}
    vertex_parent = {}
    next_id = [mesh.n_elements]
    red = set()
    split = set()
    queue = []

    def mid(i, j):
        ed = _edge(i, j)
        m = midpoint.get(ed)
        if m is None:
            pi, pj = verts[i], verts[j]
            verts.append((0.5 * (pi[0] + pj[0]), 0.5 * (pi[1] + pj[1])))
            m = len(verts) - 1
            midpoint[ed] = m
        vertex_parent[m] = ed
        return m

    def add_tri(t, region, level, origin):
        tid = next_id[0]
        next_id[0] += 1
        work[tid] = (t, region, level, origin, None)
        for k in range(3):
            edge_elems[_edge(t[k], t[(k + 1) % 3])].add(tid)
        queue.append(tid)

    def split_edges(t):
        for k in range(3):
            ed = _edge(t[k], t[(k + 1) % 3])
            if ed not in split:
                split.add(ed)
                queue.extend(sorted(edge_elems.get(ed, ())))

    def add_red(tid):
        if tid in red:
            return
        red.add(tid)
        split_edges(work[tid][0])

    def revert(gp):
        # Replace a green family by the red refinement of its parent. The
        # children are fresh triangles and go through the closure themselves,
        # since halves of the bisected edge may already be split.
        members = families.pop(gp)
        w0 = work[members[0]]
        region, level = mesh.green_parent_info.get(gp, (w0[1], w0[2] - 1))
        pv = set(gp)
        m = None
        for e in members:
            for v in work[e][0]:
                if v not in pv:
                    m = v
        for e in members:
            t = work.pop(e)[0]
            for k in range(3):
                edge_elems[_edge(t[k], t[(k + 1) % 3])].discard(e)
        if m is not None:
            midpoint[vertex_parent.get(m) or _bisected_edge(verts, gp, m)] = m
        v0, v1, v2 = gp
        m0, m1, m2 = mid(v1, v2), mid(v2, v0), mid(v0, v1)
        split_edges(gp)
        for child in ((v0, m2, m1), (m2, v1, m0), (m1, m0, v2), (m0, m1, m2)):
            add_tri(child, region, level + 1, members[0])

    for e in sorted(marked):
        if e not in work:
            continue  # already reverted with its family
        gp = work[e][4]
        if gp is not None:
            revert(gp)
        else:
            add_red(e)

    while queue:
        tid = queue.pop()
        if tid not in work or tid in red:
            continue
        w = work[tid]
        t = w[0]
        ns = sum(_edge(t[k], t[(k + 1) % 3]) in split for k in range(3))
        if ns == 0:
            continue
        if w[4] is not None:
            if w[4] in families:
                revert(w[4])
            continue
        if ns >= 2:
            add_red(tid)

    new_tris, new_region, new_level, new_parent, new_gp = [], [], [], [], []
    gp_info = dict(mesh.green_parent_info)

    def emit(t, region, level, origin, gp):
        new_tris.append(t)
        new_region.append(region)
        new_level.append(level)
        new_parent.append(origin)
        new_gp.append(gp if gp is not None else (-1, -1, -1))

    for tid in sorted(work):
        t, region, level, origin, gp = work[tid]
        v0, v1, v2 = t
        if tid in red:
            m0, m1, m2 = mid(v1, v2), mid(v2, v0), mid(v0, v1)
            for child in ((v0, m2, m1), (m2, v1, m0), (m1, m0, v2), (m0, m1, m2)):
                emit(child, region, level + 1, origin, None)
            continue
        flags = [_edge(t[(k + 1) % 3], t[(k + 2) % 3]) in split for k in range(3)]
        ns = sum(flags)
        if ns == 0:
            emit(t, region, level, origin, gp)
        elif ns == 1:
            k = flags.index(True)
            a, b, c = t[k], t[(k + 1) % 3], t[(k + 2) % 3]
            m = mid(b, c)
            gp_info[t] = (region, level)
            emit((a, b, m), region, level + 1, origin, t)
            emit((a, m, c), region, level + 1, origin, t)
        else:  # pragma: no cover - closure loop guarantees this
            raise MeshError("red-green closure failed")

    old_tags = mesh.boundary_tags

    def tag_of(ed):
        tg = old_tags.get(ed)
        if tg is not None:
            return tg
        for v, w in (ed, ed[::-1]):
            pe = vertex_parent.get(v)
            if pe is not None and w in pe:
                return tag_of(pe)
        return None

    tris = np.array(new_tris, dtype=np.int64)
    a = tris[:, [1, 2, 0]].ravel()
    b = tris[:, [2, 0, 1]].ravel()
    pairs = np.column_stack([np.minimum(a, b), np.maximum(a, b)])
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    tags = {}
    for i, j in uniq[counts == 1]:
        ed = (int(i), int(j))
        tg = tag_of(ed)
        if tg is None:
            raise MeshError(f"lost boundary tag for face {ed} during refinement")
        tags[ed] = tg
    live = set(tuple(g) for g in new_gp if g[0] >= 0)
    gp_info = {k: v for k, v in gp_info.items() if k in live}
    return Mesh(np.array(verts), tris, np.array(new_region), tags,
                refinement_level=np.array(new_level), parent=np.array(new_parent),
                green_parent=np.array(new_gp, dtype=np.int64), green_parent_info=gp_info)


def uniform_refine(mesh, times=1):
    for _ in range(times):
        mesh = refine(mesh, range(mesh.n_elements))
    return mesh


def barycentric(mesh, elements, x):
    """Barycentric coordinates of ``x`` with respect to ``elements``."""
    p = mesh.vertices[mesh.triangles[elements]]
    x = np.asarray(x, dtype=float)
    p0, p1, p2 = p[..., 0, :], p[..., 1, :], p[..., 2, :]
    det = (p1[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1]) - (
        p1[..., 1] - p0[..., 1]) * (p2[..., 0] - p0[..., 0])
    l1 = ((x[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1])
          - (x[..., 1] - p0[..., 1]) * (p2[..., 0] - p0[..., 0])) / det
    l2 = ((p1[..., 0] - p0[..., 0]) * (x[..., 1] - p0[..., 1])
          - (p1[..., 1] - p0[..., 1]) * (x[..., 0] - p0[..., 0])) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def locate_point(mesh, x, candidates=None):
    """Lowest-index element whose closed triangle contains ``x``."""
    elems = np.arange(mesh.n_elements) if candidates is None else np.asarray(candidates)
    lam = barycentric(mesh, elems, np.broadcast_to(np.asarray(x, float), (len(elems), 2)))
    inside = np.all(lam >= -INSIDE_TOL, axis=1)
    if not np.any(inside):
        raise PointLocationError(f"point {tuple(np.asarray(x).tolist())} lies outside the mesh")
    return int(elems[np.flatnonzero(inside)[0]])


def containing_elements(mesh, x):
    lam = barycentric(mesh, np.arange(mesh.n_elements),
                      np.broadcast_to(np.asarray(x, float), (mesh.n_elements, 2)))
    return np.flatnonzero(np.all(lam >= -INSIDE_TOL, axis=1)), lam


def face_geometry(mesh, f):
    """Unit normal, length and endpoints of face ``f``.

    The normal points from the left to the right element on interior faces
    and outward on boundary faces.
    """
    i, j = mesh.faces[f]
    return (mesh.face_normal[f].copy(), float(mesh.face_length[f]),
            (mesh.vertices[i].copy(), mesh.vertices[j].copy()))


def min_angle(mesh):
    """Smallest interior angle in the mesh (radians)."""
    p = mesh.vertices[mesh.triangles]
    ang = []
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        c = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        ang.append(np.arccos(np.clip(c, -1.0, 1.0)))
    return float(np.min(ang))
