"""Quadrature rules on the reference interval and reference triangle."""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def gauss_interval(n):
    """Gauss-Legendre rule with ``n`` points on [0, 1].

    Returns
    -------
    s, w : ndarray
        Nodes and weights; the weights sum to one.
    """
    x, w = roots_legendre(n)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    s.flags.writeable = False
    w.flags.writeable = False
    return s, w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss rule exact for polynomials of total degree ``degree``.

    The rule lives on the reference triangle (0,0), (1,0), (0,1) and its
    weights sum to 1/2 (the reference area).

    Returns
    -------
    pts : ndarray, shape (nq, 2)
    w : ndarray, shape (nq,)
    """
    n = degree // 2 + 1
    # Gauss-Jacobi in the collapsed direction absorbs the Duffy Jacobian (1 - a).
    a, wa = roots_jacobi(n, 1.0, 0.0)
    a = 0.5 * (a + 1.0)
    wa = wa / 4.0
    b, wb = gauss_interval(n)
    s = a[:, None] * np.ones(n)[None, :]
    t = (1.0 - a)[:, None] * b[None, :]
    pts = np.column_stack([s.ravel(), t.ravel()])
    w = (wa[:, None] * wb[None, :]).ravel()
    pts.flags.writeable = False
    w.flags.writeable = False
    return pts, w


def legendre(j, s):
    """Legendre polynomial of degree ``j`` shifted to [0, 1]."""
    x = 2.0 * np.asarray(s, dtype=float) - 1.0
    if j == 0:
        return np.ones_like(x)
    if j == 1:
        return x
    p0, p1 = np.ones_like(x), x
    for n in range(1, j):
        p0, p1 = p1, ((2 * n + 1) * x * p1 - n * p0) / (n + 1)
    return p1
