# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Jacobi kernels.

Both routines work in place on C-contiguous float64 buffers and use the
row-cyclic sweep order. ``_fallback.py`` holds the numpy twin of each.
"""

from libc.math cimport fabs, sqrt


cdef inline double _tan_rotation(double theta) nogil:
    # smaller root of t^2 + 2*theta*t - 1 = 0
    cdef double t
    if fabs(theta) > 1e150:
        t = 0.5 / theta
    else:
        t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
        if theta < 0.0:
            t = -t
    return t


def jacobi_eigh(double[:, ::1] a, double[:, ::1] vt, double tol, double skip,
                int max_sweeps):
    """Diagonalise symmetric ``a`` in place; accumulate eigenvectors as rows of ``vt``.

    Returns the number of sweeps performed, or -1 if ``max_sweeps`` was
    exhausted before the off-diagonal Frobenius norm fell to ``tol``.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef double off, apq, app, aqq, theta, t, c, s, x, y
    cdef int result = -1
    with nogil:
        for sweep in range(max_sweeps + 1):
            off = 0.0
            for p in range(n):
                for q in range(p + 1, n):
                    off = off + a[p, q] * a[p, q]
            if sqrt(2.0 * off) <= tol:
                result = sweep
                break
            if sweep == max_sweeps:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if fabs(apq) <= skip:
                        continue
                    app = a[p, p]
                    aqq = a[q, q]
                    theta = (aqq - app) / (2.0 * apq)
                    t = _tan_rotation(theta)
                    c = 1.0 / sqrt(t * t + 1.0)
                    s = t * c
                    for k in range(n):
                        x = a[p, k]
                        y = a[q, k]
                        a[p, k] = c * x - s * y
                        a[q, k] = s * x + c * y
                    for k in range(n):
                        a[k, p] = a[p, k]
                        a[k, q] = a[q, k]
                    a[p, p] = app - t * apq
                    a[q, q] = aqq + t * apq
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for k in range(n):
                        x = vt[p, k]
                        y = vt[q, k]
                        vt[p, k] = c * x - s * y
                        vt[q, k] = s * x + c * y
    return result


def jacobi_svd_rows(double[:, ::1] b, double[:, ::1] vt, double tol,
                    int max_sweeps):
    """One-sided Jacobi: orthogonalise the rows of ``b`` in place.

    Row rotations are mirrored into ``vt`` so that on exit
    ``b_in = vt.T @ b_out`` and the rows of ``b_out`` are mutually
    orthogonal. Returns sweeps used, or -1 on non-convergence.
    """
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t m = b.shape[1]
    cdef Py_ssize_t nv = vt.shape[1]
    cdef Py_ssize_t p, q, k
    cdef int sweep, rotated
    cdef double alpha, beta, gamma, zeta, t, c, s, x, y
    cdef int result = -1
    with nogil:
        for sweep in range(max_sweeps):
            rotated = 0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    alpha = 0.0
                    beta = 0.0
                    gamma = 0.0
                    for k in range(m):
                        alpha = alpha + b[p, k] * b[p, k]
                        beta = beta + b[q, k] * b[q, k]
                        gamma = gamma + b[p, k] * b[q, k]
                    if gamma == 0.0 or fabs(gamma) <= tol * sqrt(alpha * beta):
                        continue
                    rotated = 1
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = _tan_rotation(zeta)
                    c = 1.0 / sqrt(t * t + 1.0)
                    s = t * c
                    for k in range(m):
                        x = b[p, k]
                        y = b[q, k]
                        b[p, k] = c * x - s * y
                        b[q, k] = s * x + c * y
                    for k in range(nv):
                        x = vt[p, k]
                        y = vt[q, k]
                        vt[p, k] = c * x - s * y
                        vt[q, k] = s * x + c * y
            if not rotated:
                result = sweep + 1
                break
    return result
