"""Orthonormal Legendre tensor basis and Gauss quadrature on [-1, 1]^2.

Modes are ordered hierarchically: all modes of Q_{r-1} come before the
modes that are new in Q_r.  Truncating a coefficient block of Q_r to its
first ``r**2`` entries is therefore the L2 projection onto Q_{r-1}.
"""
from functools import lru_cache

import numpy as np


def n_modes(order):
    return (order + 1) ** 2


@lru_cache(maxsize=None)
def mode_indices(order):
    """(n_modes, 2) array of 1D degrees (i, j) for each tensor mode."""
    out = []
    for k in range(order + 1):
        out.extend((i, k) for i in range(k))
        out.extend((k, j) for j in range(k + 1))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def legendre(x, n, deriv=0):
    """Orthonormal Legendre polynomials sqrt(k + 1/2) P_k and derivatives.

    Returns an array of shape ``x.shape + (n + 1,)``.
    """
    x = np.asarray(x, dtype=float)
    P = np.zeros(x.shape + (n + 1,))
    dP = np.zeros_like(P)
    d2P = np.zeros_like(P)
    P[..., 0] = 1.0
    if n >= 1:
        P[..., 1] = x
        dP[..., 1] = 1.0
    for k in range(1, n):
        # Bonnet recursion and its first two derivatives
        P[..., k + 1] = ((2 * k + 1) * x * P[..., k] - k * P[..., k - 1]) / (k + 1)
        dP[..., k + 1] = dP[..., k - 1] + (2 * k + 1) * P[..., k]
        d2P[..., k + 1] = d2P[..., k - 1] + (2 * k + 1) * dP[..., k]
    scale = np.sqrt(np.arange(n + 1) + 0.5)
    return (P, dP, d2P)[deriv] * scale


@lru_cache(maxsize=None)
def gauss(n):
    """n-point Gauss-Legendre rule on [-1, 1]; exact to degree 2n - 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def gauss_square(n):
    """Tensor Gauss rule on [-1, 1]^2: points (n*n, 2) and weights (n*n,)."""
    x, w = gauss(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    wts = np.outer(w, w).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def tabulate(order, xi, eta, deriv=1):
    """Evaluate the Q_order basis at reference points.

    Parameters
    ----------
    order : int
    xi, eta : array_like, same shape S
    deriv : 0, 1 or 2
        Highest derivative returned.

    Returns
    -------
    list
        ``[values (S, m)]``, plus reference gradients ``(S, m, 2)`` when
        ``deriv >= 1`` and Hessians ``(S, m, 2, 2)`` when ``deriv == 2``.
    """
    ij = mode_indices(order)
    Lx = [legendre(xi, order, d) for d in range(deriv + 1)]
    Ly = [legendre(eta, order, d) for d in range(deriv + 1)]
    i, j = ij[:, 0], ij[:, 1]
    out = [Lx[0][..., i] * Ly[0][..., j]]
    if deriv >= 1:
        out.append(np.stack([Lx[1][..., i] * Ly[0][..., j],
                             Lx[0][..., i] * Ly[1][..., j]], axis=-1))
    if deriv >= 2:
        hxx = Lx[2][..., i] * Ly[0][..., j]
        hxy = Lx[1][..., i] * Ly[1][..., j]
        hyy = Lx[0][..., i] * Ly[2][..., j]
        out.append(np.stack([np.stack([hxx, hxy], -1),
                             np.stack([hxy, hyy], -1)], -2))
    return out


@lru_cache(maxsize=None)
def child_prolongation(order):
    """Matrices mapping parent coefficients to each of the four children.

    ``P[c] @ parent == child`` for child position ``c = a + 2 b`` where
    ``(a, b)`` selects the lower/upper half in x and y.  Exact because the
    parent polynomial lies in the child space.
    """
    n = order + 1
    pts, wts = gauss_square(n)
    (B,) = tabulate(order, pts[:, 0], pts[:, 1], deriv=0)
    P = np.empty((4, n_modes(order), n_modes(order)))
    for c in range(4):
        a, b = c % 2, c // 2
        xp = 0.5 * pts[:, 0] + (a - 0.5)
        yp = 0.5 * pts[:, 1] + (b - 0.5)
        (Bp,) = tabulate(order, xp, yp, deriv=0)
        P[c] = (B * wts[:, None]).T @ Bp
    P.setflags(write=False)
    return P
