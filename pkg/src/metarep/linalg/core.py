"""Dense kernels: symmetric eigendecomposition, thin SVD, row orthonormalisation.

The Jacobi inner loops live in a compiled extension when it is available
and in a numpy fallback otherwise; ``BACKEND`` records which one was
picked at import. Set ``METAREP_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from metarep.errors import (
    AsymmetryTooLarge,
    ConvergenceFailure,
    NonSquare,
    RankDeficient,
)
from metarep.linalg import _fallback

try:
    from metarep.linalg import _jacobi as _compiled
except ImportError:  # extension not built
    _compiled = None

_KERNELS = {"python": _fallback}
if _compiled is not None:
    _KERNELS["cython"] = _compiled

if os.environ.get("METAREP_BACKEND", "").lower() == "python" or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

MAX_SWEEPS = 100
OFFDIAG_RTOL = 1e-12
SVD_TOL = 1e-15


def available_backends() -> list[str]:
    return sorted(_KERNELS)


def _kernels(backend):
    name = backend or BACKEND
    try:
        return _KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}") from None


@dataclass(frozen=True)
class EigenResult:
    """Eigenpairs sorted by descending eigenvalue.

    Column ``i`` of ``eigenvectors`` pairs with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def normalize_signs(vectors: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Flip columns so that the first component above ``atol`` is positive."""
    out = np.array(vectors, dtype=np.float64, copy=True)
    for j in range(out.shape[1]):
        nz = np.flatnonzero(np.abs(out[:, j]) > atol)
        if nz.size and out[nz[0], j] < 0:
            out[:, j] *= -1.0
    return out


def sym_eig(a, *, backend: str | None = None, max_sweeps: int = MAX_SWEEPS) -> EigenResult:
    """Eigendecomposition of a (numerically) symmetric matrix by cyclic Jacobi.

    The input is symmetrised as ``(A + A.T) / 2`` first. Iteration stops
    once the off-diagonal Frobenius norm drops to ``1e-12 * ||A||_F``.

    Raises
    ------
    NonSquare
        If ``a`` is not square.
    AsymmetryTooLarge
        If ``max|A - A.T| > 1e-8 * (1 + max|A|)``.
    ConvergenceFailure
        If ``max_sweeps`` sweeps do not reach the threshold.
    """
    a = _as_matrix(a)
    n, m = a.shape
    if n != m:
        raise NonSquare(f"matrix is {n}x{m}")
    amax = float(np.max(np.abs(a))) if a.size else 0.0
    if a.size and float(np.max(np.abs(a - a.T))) > 1e-8 * (1.0 + amax):
        raise AsymmetryTooLarge("input is not symmetric within tolerance")

    work = np.ascontiguousarray(0.5 * (a + a.T))
    vt = np.eye(n)
    fro = float(np.linalg.norm(work))
    if fro == 0.0:
        return EigenResult(np.zeros(n), vt, 0)
    tol = OFFDIAG_RTOL * fro
    # entries this small cannot move the off-norm across tol
    skip = 1e-18 * fro
    sweeps = _kernels(backend).jacobi_eigh(work, vt, tol, skip, max_sweeps)
    if sweeps < 0:
        raise ConvergenceFailure(f"Jacobi did not converge in {max_sweeps} sweeps")

    w = np.diag(work).copy()
    order = np.argsort(-w, kind="stable")
    vecs = normalize_signs(vt[order].T)
    return EigenResult(w[order], vecs, int(sweeps))


def _orthonormal_complement(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace columns of ``u`` not in ``keep`` by an orthonormal completion."""
    m, k = u.shape
    basis = [u[:, j] for j in range(k) if keep[j]]
    out = u.copy()
    candidates = iter(np.eye(m))
    for j in range(k):
        if keep[j]:
            continue
        while True:
            e = next(candidates)
            for _ in range(2):
                for b in basis:
                    e = e - (b @ e) * b
            nrm = np.linalg.norm(e)
            if nrm > 1e-6:
                break
        e = e / nrm
        basis.append(e)
        out[:, j] = e
    return out


def thin_svd(a, *, backend: str | None = None, max_sweeps: int = MAX_SWEEPS):
    """Thin SVD ``A = U @ diag(s) @ V.T`` by one-sided Jacobi.

    Returns ``(U, s, V)`` with ``k = min(m, n)`` columns each and ``s``
    sorted in non-increasing order.
    """
    a = _as_matrix(a)
    m, n = a.shape
    if m < n:
        v, s, u = thin_svd(a.T, backend=backend, max_sweeps=max_sweeps)
        return u, s, v

    rows = np.array(a.T, order="C", copy=True)
    vt = np.eye(n)
    if n:
        sweeps = _kernels(backend).jacobi_svd_rows(rows, vt, SVD_TOL, max_sweeps)
        if sweeps < 0:
            raise ConvergenceFailure(f"one-sided Jacobi did not converge in {max_sweeps} sweeps")

    s = np.linalg.norm(rows, axis=1)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    rows = rows[order]
    vt = vt[order]
    smax = s[0] if n else 0.0
    keep = s > max(smax * max(m, n) * np.finfo(float).eps, np.finfo(float).tiny)
    u = np.zeros((m, n))
    u[:, keep] = (rows[keep] / s[keep, None]).T
    if not keep.all():
        u = _orthonormal_complement(u, keep)
    return u, s, vt.T


def orthonormalize_rows(a, *, rtol: float = 1e-10) -> np.ndarray:
    """Gram-Schmidt (two passes) on the rows of ``a``; same row span, ``Q Q.T = I``.

    Raises ``RankDeficient`` when a row is dependent on its predecessors
    to within ``rtol`` of its own norm.
    """
    a = _as_matrix(a)
    r, d = a.shape
    if r > d:
        raise RankDeficient(f"{r} rows cannot be independent in dimension {d}")
    q = np.zeros_like(a)
    for i in range(r):
        v = a[i].copy()
        nrm0 = np.linalg.norm(v)
        for _ in range(2):
            v -= q[:i].T @ (q[:i] @ v)
        nrm = np.linalg.norm(v)
        if nrm0 == 0.0 or nrm <= rtol * nrm0:
            raise RankDeficient(f"row {i} is linearly dependent on earlier rows")
        q[i] = v / nrm
    return q
