# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stencil kernels for fields on a Dirichlet box grid.

Fields are stored flat, one row per host, C order over the grid axes.
All reductions run in a fixed sequential order so results are
deterministic and mirror-symmetric inputs produce mirror-symmetric
outputs bit for bit.
"""

import numpy as np


cdef void _lap_row(const double* x, double* y, Py_ssize_t m0, Py_ssize_t m1,
                   Py_ssize_t m2, int ndim, double inv_h2) noexcept nogil:
    cdef Py_ssize_t i0, i1, i2, k, s01
    cdef double pair0, pair1, pair2, two_n, c
    two_n = 2.0 * ndim
    if ndim == 1:
        for i0 in range(m0):
            pair0 = 0.0
            if i0 > 0:
                pair0 = pair0 + x[i0 - 1]
            if i0 < m0 - 1:
                pair0 = pair0 + x[i0 + 1]
            y[i0] = inv_h2 * (pair0 - two_n * x[i0])
    elif ndim == 2:
        for i0 in range(m0):
            k = i0 * m1
            for i1 in range(m1):
                c = x[k + i1]
                pair0 = 0.0
                if i0 > 0:
                    pair0 = pair0 + x[k + i1 - m1]
                if i0 < m0 - 1:
                    pair0 = pair0 + x[k + i1 + m1]
                pair1 = 0.0
                if i1 > 0:
                    pair1 = pair1 + x[k + i1 - 1]
                if i1 < m1 - 1:
                    pair1 = pair1 + x[k + i1 + 1]
                y[k + i1] = inv_h2 * ((pair0 + pair1) - two_n * c)
    else:
        s01 = m1 * m2
        for i0 in range(m0):
            for i1 in range(m1):
                k = i0 * s01 + i1 * m2
                for i2 in range(m2):
                    c = x[k + i2]
                    pair0 = 0.0
                    if i0 > 0:
                        pair0 = pair0 + x[k + i2 - s01]
                    if i0 < m0 - 1:
                        pair0 = pair0 + x[k + i2 + s01]
                    pair1 = 0.0
                    if i1 > 0:
                        pair1 = pair1 + x[k + i2 - m2]
                    if i1 < m1 - 1:
                        pair1 = pair1 + x[k + i2 + m2]
                    pair2 = 0.0
                    if i2 > 0:
                        pair2 = pair2 + x[k + i2 - 1]
                    if i2 < m2 - 1:
                        pair2 = pair2 + x[k + i2 + 1]
                    y[k + i2] = inv_h2 * (((pair0 + pair1) + pair2) - two_n * c)


cdef void _dims(dims, Py_ssize_t* m0, Py_ssize_t* m1, Py_ssize_t* m2, int* ndim):
    ndim[0] = len(dims)
    m0[0] = dims[0]
    m1[0] = dims[1] if ndim[0] > 1 else 1
    m2[0] = dims[2] if ndim[0] > 2 else 1


def lap_apply(const double[:, ::1] x, dims, double inv_h2):
    """Dirichlet Laplacian of each row of ``x`` (shape (rows, prod(dims)))."""
    cdef Py_ssize_t m0, m1, m2, i
    cdef int ndim
    _dims(dims, &m0, &m1, &m2, &ndim)
    out = np.empty((x.shape[0], x.shape[1]), dtype=np.float64)
    cdef double[:, ::1] y = out
    for i in range(x.shape[0]):
        _lap_row(&x[i, 0], &y[i, 0], m0, m1, m2, ndim, inv_h2)
    return out


def coupled_apply(const double[:, ::1] x, const double[:, ::1] w, double coup,
                  double nu, dims, double inv_h2):
    """Apply the coupled operator: y_i = -nu*lap(x_i) + w_i*x_i - coup*(S - x_i).

    S is the pointwise sum over hosts (rows).  ``coup = 0`` decouples the rows.
    """
    cdef Py_ssize_t m0, m1, m2, i, k, H, N
    cdef int ndim
    cdef double s
    _dims(dims, &m0, &m1, &m2, &ndim)
    H = x.shape[0]
    N = x.shape[1]
    out = np.empty((H, N), dtype=np.float64)
    cdef double[:, ::1] y = out
    for i in range(H):
        _lap_row(&x[i, 0], &y[i, 0], m0, m1, m2, ndim, inv_h2)
    for i in range(H):
        for k in range(N):
            y[i, k] = -nu * y[i, k] + (w[i, k] + coup) * x[i, k]
    if coup != 0.0:
        for k in range(N):
            s = 0.0
            for i in range(H):
                s = s + x[i, k]
            for i in range(H):
                y[i, k] = y[i, k] - coup * s
    return out


cdef double _dot(const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double s = 0.0
    for i in range(a.shape[0]):
        for k in range(a.shape[1]):
            s = s + a[i, k] * b[i, k]
    return s


def cg_jacobi(const double[:, ::1] b, const double[:, ::1] w, double coup,
              double nu, dims, double inv_h2, double rtol, Py_ssize_t max_iter,
              x0=None):
    """Conjugate gradients with Jacobi preconditioning for the coupled operator.

    Solves ``coupled_apply(x) = b``.  Returns ``(x, iters, relres, converged)``
    where ``relres`` is ||b - A x|| / ||b||.
    """
    cdef Py_ssize_t H = b.shape[0], N = b.shape[1], it, i, k
    cdef double two_n = 2.0 * len(dims)
    cdef double bnorm2, rz, rz_new, pap, alpha, beta, rn2, tol2

    x_arr = np.zeros((H, N), dtype=np.float64) if x0 is None else np.array(x0, dtype=np.float64)
    diag_arr = np.empty((H, N), dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] diag = diag_arr
    for i in range(H):
        for k in range(N):
            diag[i, k] = two_n * nu * inv_h2 + w[i, k] + coup

    bnorm2 = _dot(b, b)
    if bnorm2 == 0.0:
        x_arr[:] = 0.0
        return x_arr, 0, 0.0, True
    tol2 = rtol * rtol * bnorm2

    if x0 is None:
        r_arr = np.array(b, dtype=np.float64)
    else:
        r_arr = np.asarray(b) - coupled_apply(x, w, coup, nu, dims, inv_h2)
    cdef double[:, ::1] r = r_arr
    z_arr = np.empty((H, N), dtype=np.float64)
    cdef double[:, ::1] z = z_arr
    for i in range(H):
        for k in range(N):
            z[i, k] = r[i, k] / diag[i, k]
    p_arr = z_arr.copy()
    cdef double[:, ::1] p = p_arr
    rz = _dot(r, z)
    rn2 = _dot(r, r)

    it = 0
    while rn2 > tol2 and it < max_iter:
        ap_arr = coupled_apply(p, w, coup, nu, dims, inv_h2)
        pap = _dot(p, ap_arr)
        if pap <= 0.0:
            raise FloatingPointError("CG breakdown: operator not positive definite")
        alpha = rz / pap
        _axpy(x, p, alpha)
        _axpy(r, ap_arr, -alpha)
        rn2 = _dot(r, r)
        if rn2 <= tol2:
            it += 1
            break
        for i in range(H):
            for k in range(N):
                z[i, k] = r[i, k] / diag[i, k]
        rz_new = _dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        for i in range(H):
            for k in range(N):
                p[i, k] = z[i, k] + beta * p[i, k]
        it += 1

    return x_arr, it, (rn2 / bnorm2) ** 0.5, rn2 <= tol2


cdef void _axpy(double[:, ::1] y, const double[:, ::1] v, double a) noexcept nogil:
    cdef Py_ssize_t i, k
    for i in range(y.shape[0]):
        for k in range(y.shape[1]):
            y[i, k] = y[i, k] + a * v[i, k]
