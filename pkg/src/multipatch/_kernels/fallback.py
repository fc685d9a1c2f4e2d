"""Pure-NumPy implementations of the stencil kernels.

Mirrors the compiled extension: same call signatures, same
neighbour-pairing order (so both backends agree to rounding), no
randomness anywhere.
"""
from __future__ import annotations

import numpy as np


def _axis_pair_sums(X: np.ndarray) -> np.ndarray:
    """Sum of the two grid neighbours along each axis, missing ones = 0."""
    ndim = X.ndim - 1  # leading axis indexes hosts/rows
    acc = None
    for d in range(1, ndim + 1):
        pair = np.zeros_like(X)
        lo = [slice(None)] * X.ndim
        hi = [slice(None)] * X.ndim
        lo[d] = slice(1, None)
        hi[d] = slice(None, -1)
        pair[tuple(lo)] += X[tuple(hi)]
        pair[tuple(hi)] += X[tuple(lo)]
        acc = pair if acc is None else acc + pair
    return acc


def lap_apply(x: np.ndarray, dims: tuple[int, ...], inv_h2: float) -> np.ndarray:
    """Dirichlet Laplacian of each row of ``x`` (shape (rows, prod(dims)))."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    X = x.reshape((x.shape[0],) + tuple(dims))
    out = inv_h2 * (_axis_pair_sums(X) - (2.0 * len(dims)) * X)
    return out.reshape(x.shape)


def coupled_apply(x: np.ndarray, w: np.ndarray, coup: float, nu: float,
                  dims: tuple[int, ...], inv_h2: float) -> np.ndarray:
    """y_i = -nu*lap(x_i) + w_i*x_i - coup*(S - x_i) with S the host sum."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = -nu * lap_apply(x, dims, inv_h2) + (np.asarray(w) + coup) * x
    if coup != 0.0:
        y -= coup * x.sum(axis=0)[None, :]
    return y


def cg_jacobi(b: np.ndarray, w: np.ndarray, coup: float, nu: float,
              dims: tuple[int, ...], inv_h2: float, rtol: float,
              max_iter: int, x0: np.ndarray | None = None):
    """Jacobi-preconditioned CG for the coupled operator.

    Returns ``(x, iters, relres, converged)``.
    """
    b = np.asarray(b, dtype=np.float64)
    diag = 2.0 * len(dims) * nu * inv_h2 + np.asarray(w) + coup
    bnorm2 = float(np.dot(b.ravel(), b.ravel()))
    if bnorm2 == 0.0:
        return np.zeros_like(b), 0, 0.0, True
    tol2 = rtol * rtol * bnorm2

    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=np.float64)
        r = b - coupled_apply(x, w, coup, nu, dims, inv_h2)
    z = r / diag
    p = z.copy()
    rz = float(np.dot(r.ravel(), z.ravel()))
    rn2 = float(np.dot(r.ravel(), r.ravel()))

    it = 0
    while rn2 > tol2 and it < max_iter:
        ap = coupled_apply(p, w, coup, nu, dims, inv_h2)
        pap = float(np.dot(p.ravel(), ap.ravel()))
        if pap <= 0.0:
            raise FloatingPointError("CG breakdown: operator not positive definite")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        rn2 = float(np.dot(r.ravel(), r.ravel()))
        if rn2 <= tol2:
            it += 1
            break
        z = r / diag
        rz_new = float(np.dot(r.ravel(), z.ravel()))
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
        it += 1

    return x, it, (rn2 / bnorm2) ** 0.5, rn2 <= tol2
