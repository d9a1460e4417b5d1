"""Closed-form matrix functions of 2x2 matrices.

Any 2x2 matrix splits as ``A = m I + N`` with ``m = tr(A)/2`` and a
trace-free ``N``. Cayley-Hamilton gives ``N @ N = d2 I`` with
``d2 = ((a11 - a22)/2)**2 + a12*a21``, so every analytic ``f(A)`` collapses to
``f0 I + f1 N``, with ``f0``/``f1`` the even/odd parts of ``f`` around ``m``
evaluated at ``sqrt(d2)``. The sign of ``d2`` selects the branch: real
distinct eigenvalues (hyperbolic functions), complex conjugate eigenvalues
(trigonometric functions), or a repeated eigenvalue (Taylor series).
"""

import numpy as np

from .quadrature import gauss_interval

# |d2| below this fraction of ||A||^2 is treated as a repeated eigenvalue.
REPEATED_TOL = 1e-12

_SERIES_TERMS = 13
_GL_NODES, _GL_WEIGHTS = gauss_interval(40)


def split(A):
    """Return ``(m, d2, N)`` for ``A = m I + N`` with ``N @ N = d2 I``."""
    A = np.asarray(A, dtype=float)
    m = 0.5 * (A[0, 0] + A[1, 1])
    h = 0.5 * (A[0, 0] - A[1, 1])
    d2 = h * h + A[0, 1] * A[1, 0]
    N = np.array([[h, A[0, 1]], [A[1, 0], -h]])
    return m, d2, N


def expm2(A):
    """Exponential of a single 2x2 matrix in closed form."""
    return expm_flow(A, 1.0)


def expm_flow(G, t):
    """``exp(G t)`` for a 2x2 matrix ``G`` and scalar or array ``t``.

    Returns an array of shape ``t.shape + (2, 2)``.
    """
    m, d2, N = split(G)
    t = np.asarray(t, dtype=float)
    scale = np.abs(np.asarray(G, dtype=float)).max()
    c, s = _cosh_sinhc(d2, t, scale)
    em = np.exp(m * t)
    out = (em * c)[..., None, None] * np.eye(2) + (em * s)[..., None, None] * N
    return out


def _cosh_sinhc(d2, t, scale):
    """``cosh(d t)`` and ``sinh(d t)/d`` with ``d = sqrt(d2)`` (real or imaginary)."""
    if abs(d2) <= REPEATED_TOL * scale * scale:
        q = d2 * t * t
        c = 1.0 + q / 2.0 + q * q / 24.0
        s = t * (1.0 + q / 6.0 + q * q / 120.0)
    elif d2 > 0.0:
        d = np.sqrt(d2)
        c = np.cosh(d * t)
        s = np.sinh(d * t) / d
    else:
        w = np.sqrt(-d2)
        c = np.cos(w * t)
        s = np.sin(w * t) / w
    return c, s


def _phi1(z):
    """``(exp(z) - 1)/z`` for real or complex arrays."""
    z = np.asarray(z)
    if np.iscomplexobj(z):
        out = np.empty_like(z)
        small = np.abs(z) < 0.5
        zs = z[small]
        term = np.ones_like(zs)
        acc = np.ones_like(zs)
        for k in range(2, 20):
            term = term * zs / k
            acc = acc + term
        out[small] = acc
        zl = z[~small]
        out[~small] = (np.exp(zl) - 1.0) / zl
        return out
    out = np.ones_like(z, dtype=float)
    nz = z != 0.0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def _moments(mu, nmax):
    """``I_n(mu) = int_0^1 s^n exp(mu s) ds`` for n = 0..nmax.

    Returns an array of shape ``(nmax + 1,) + mu.shape``.
    """
    mu = np.asarray(mu, dtype=float)
    out = np.empty((nmax + 1,) + mu.shape)
    small = np.abs(mu) <= 25.0
    if np.any(small):
        ms = mu[small]
        e = np.exp(np.multiply.outer(ms, _GL_NODES))
        for n in range(nmax + 1):
            out[n][small] = e @ (_GL_WEIGHTS * _GL_NODES**n)
    if np.any(~small):
        # Upward recurrence is stable once |mu| exceeds n.
        ml = mu[~small]
        em = np.exp(ml)
        cur = np.expm1(ml) / ml
        out[0][~small] = cur
        for n in range(1, nmax + 1):
            cur = (em - n * cur) / ml
            out[n][~small] = cur
    return out


def phi_flow(G, t):
    """``int_0^t exp(G s) ds`` for a 2x2 matrix ``G`` and scalar or array ``t``.

    Returns an array of shape ``t.shape + (2, 2)``.
    """
    m, d2, N = split(G)
    t = np.asarray(t, dtype=float)
    mu = m * t
    q = d2 * t * t
    f0 = np.empty(t.shape)
    f1 = np.empty(t.shape)

    near = np.abs(q) <= 1.0
    if np.any(near):
        qn = q[near]
        mom = _moments(mu[near], 2 * _SERIES_TERMS + 1)
        a0 = np.zeros(qn.shape)
        a1 = np.zeros(qn.shape)
        qj = np.ones(qn.shape)
        fact_even = 1.0
        for j in range(_SERIES_TERMS + 1):
            if j > 0:
                fact_even *= (2 * j - 1) * (2 * j)
            a0 += qj * mom[2 * j] / fact_even
            a1 += qj * mom[2 * j + 1] / (fact_even * (2 * j + 1))
            qj = qj * qn
        f0[near] = a0
        f1[near] = a1

    far_pos = q > 1.0
    if np.any(far_pos):
        delta = np.sqrt(q[far_pos])
        mp = _phi1(mu[far_pos] + delta)
        mm = _phi1(mu[far_pos] - delta)
        f0[far_pos] = 0.5 * (mp + mm)
        f1[far_pos] = (mp - mm) / (2.0 * delta)

    far_neg = q < -1.0
    if np.any(far_neg):
        omega = np.sqrt(-q[far_neg])
        z = _phi1(mu[far_neg] + 1j * omega)
        f0[far_neg] = z.real
        f1[far_neg] = z.imag / omega

    # int_0^t exp(Gs) ds = t * phi1(Gt), phi1(Gt) = f0 I + f1 (Gt - m t I)
    a = t * f0
    b = t * t * f1
    return a[..., None, None] * np.eye(2) + b[..., None, None] * N
