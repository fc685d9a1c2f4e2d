"""Shared dense-matrix oracles for the stencil and operator tests.

These rebuild the discrete operators as explicit matrices through an
independent route (Kronecker products of tridiagonal blocks), so the
matrix-free kernels can be checked against plain dense linear algebra.
"""
from __future__ import annotations

import numpy as np

from multipatch.domain import DiscreteDomain


def dense_laplacian(dom: DiscreteDomain) -> np.ndarray:
    """Dirichlet Laplacian as a dense (size, size) matrix."""
    m = dom.m
    T = (np.diag(-2.0 * np.ones(m)) + np.diag(np.ones(m - 1), 1)
         + np.diag(np.ones(m - 1), -1))
    I = np.eye(m)
    if dom.n == 1:
        L = T
    elif dom.n == 2:
        L = np.kron(T, I) + np.kron(I, T)
    else:
        L = (np.kron(np.kron(T, I), I) + np.kron(np.kron(I, T), I)
             + np.kron(np.kron(I, I), T))
    return L / dom.h**2


def dense_coupled(op) -> np.ndarray:
    """The coupled operator as a dense (H*N, H*N) matrix, host-major."""
    dom = op.domain
    H, N = op.hosts, dom.size
    L = dense_laplacian(dom)
    A = np.zeros((H * N, H * N))
    for i in range(H):
        sl = slice(i * N, (i + 1) * N)
        A[sl, sl] = -op.nu * L + np.diag(op.w0[i])
        for j in range(H):
            if j != i:
                A[sl, j * N:(j + 1) * N] = -op.coup * np.eye(N)
    return A
