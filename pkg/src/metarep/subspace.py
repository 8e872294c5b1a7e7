"""Representation recovery from a moment matrix.

The top-``r`` eigenvectors of ``M_hat`` estimate the row space of ``W``.
Because that space is only identified up to rotation, the estimate is
aligned to ``W`` with the Frobenius-optimal orthogonal Procrustes rotation
before distances are measured.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from metarep.errors import DimensionMismatch, GapViolated, RankOutOfRange
from metarep.linalg import sym_eig, thin_svd
from metarep.moments import MomentMatrix
from metarep.tasks import Representation

GAP_FLOOR = 1e-12


class DegenerateGapWarning(UserWarning):
    """Eigenvalues ``r`` and ``r+1`` of the moment matrix (nearly) coincide."""


@dataclass(frozen=True)
class RecoveredSubspace:
    U_r: np.ndarray
    eigenvalues: np.ndarray
    spectral_gap: float
    spectrum: np.ndarray
    degenerate: bool = False

    @property
    def r(self) -> int:
        return self.U_r.shape[1]

    @property
    def d(self) -> int:
        return self.U_r.shape[0]

    def reconstruction(self) -> np.ndarray:
        """Rank-``r`` approximation ``U_r diag(lambda) U_r^T``."""
        return (self.U_r * self.eigenvalues) @ self.U_r.T


@dataclass(frozen=True)
class AlignmentResult:
    Q_hat: np.ndarray
    W_hat: np.ndarray
    frobenius_residual: float
    spectral_residual: float


@dataclass(frozen=True)
class DavisKahanRecord:
    lhs: float
    rhs: float
    holds: bool
    perturbation: float
    lambda_r: float


def _matrix(m):
    return m.M if isinstance(m, MomentMatrix) else np.asarray(m, dtype=np.float64)


def _basis(sub):
    return sub.U_r if isinstance(sub, RecoveredSubspace) else np.asarray(sub, dtype=np.float64)


def subspace_from_eigen(eig, r: int) -> RecoveredSubspace:
    """Slice an existing eigendecomposition; lets callers sweep ``r`` cheaply."""
    w = eig.eigenvalues
    d = w.shape[0]
    if not 1 <= r <= d:
        raise RankOutOfRange(f"need 1 <= r <= {d}, got {r}")
    gap = float(w[r - 1] - w[r]) if r < d else float("inf")
    degenerate = gap < GAP_FLOOR
    if degenerate:
        warnings.warn(f"spectral gap {gap:.3g} at r={r}: subspace is ill-defined",
                      DegenerateGapWarning, stacklevel=3)
    return RecoveredSubspace(eig.eigenvectors[:, :r].copy(), w[:r].copy(), gap, w.copy(), degenerate)


def recover_subspace(M_hat, r: int) -> RecoveredSubspace:
    """Top-``r`` eigenvectors of ``M_hat``, ordered by descending eigenvalue.

    A gap ``lambda_r - lambda_{r+1} < 1e-12`` sets ``degenerate`` and emits
    a ``DegenerateGapWarning`` instead of failing.
    """
    M = _matrix(M_hat)
    if not 1 <= r <= M.shape[0]:
        raise RankOutOfRange(f"need 1 <= r <= {M.shape[0]}, got {r}")
    return subspace_from_eigen(sym_eig(M), r)


def _check_dims(U, rep):
    if U.shape != (rep.d, rep.r):
        raise DimensionMismatch(f"basis is {U.shape}, representation needs ({rep.d}, {rep.r})")


def spectral_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] == a.shape[1] and np.array_equal(a, a.T):
        return float(np.max(np.abs(sym_eig(a).eigenvalues)))
    return float(thin_svd(a)[1][0])


def procrustes_align(sub, rep: Representation) -> AlignmentResult:
    """``Q_hat = argmin_{Q Q^T = I} ||U_r Q - W^T||_F`` and ``W_hat = (U_r Q_hat)^T``."""
    U = _basis(sub)
    _check_dims(U, rep)
    A, _, B = thin_svd(U.T @ rep.W.T)
    Q = A @ B.T
    aligned = U @ Q
    diff = aligned - rep.W.T
    return AlignmentResult(Q, aligned.T, float(np.linalg.norm(diff)), float(thin_svd(diff)[1][0]))


def subspace_correlation(sub, rep: Representation) -> float:
    """``||U_r^T W^T||_F^2 / r``: 1 for identical spans, 0 for orthogonal ones."""
    U = _basis(sub)
    _check_dims(U, rep)
    return float(np.sum((U.T @ rep.W.T) ** 2) / rep.r)


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians, ascending) between two orthonormal bases.

    Angles below pi/4 come from the sines (singular values of the part of
    ``B`` outside ``span(A)``), since arccos cannot resolve angles under ~1e-8.
    """
    A, B = np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64)
    cross = A.T @ B
    from_cos = np.arccos(np.clip(thin_svd(cross)[1], -1.0, 1.0))
    sines = np.sort(thin_svd(B - A @ cross)[1])[: from_cos.size]
    from_sin = np.arcsin(np.clip(sines, 0.0, 1.0))
    return np.where(from_cos < np.pi / 4, from_sin, from_cos)


def davis_kahan_check(M_hat, M_oracle, rep: Representation, r: int | None = None) -> DavisKahanRecord:
    """Compare ``||W_hat - W||_2`` with ``e / (lambda_r(M) - e)``, ``e = ||M_hat - M||_2``.

    Raises ``GapViolated`` when ``lambda_r(M) <= e``; the bound is vacuous there.
    """
    r = rep.r if r is None else r
    Mh = _matrix(M_hat)
    M = _matrix(M_oracle)
    e = spectral_norm(Mh - M)
    lam_r = float(sym_eig(M).eigenvalues[r - 1])
    if lam_r <= e:
        raise GapViolated(f"lambda_r(M)={lam_r:.3g} <= ||M_hat - M||={e:.3g}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGapWarning)
        sub = recover_subspace(Mh, r)
    lhs = procrustes_align(sub, rep).spectral_residual
    rhs = e / (lam_r - e)
    # absolute slack covers rounding when M_hat == M exactly
    holds = lhs <= rhs * (1.0 + 1e-9) + 1e-12
    return DavisKahanRecord(lhs, rhs, bool(holds), e, lam_r)
