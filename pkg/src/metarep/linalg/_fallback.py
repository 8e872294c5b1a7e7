"""Pure numpy twins of the compiled Jacobi kernels.

Python-level loops over individual (p, q) pairs are far too slow at
d = 784, so these use the round-robin (tournament) ordering: each sweep
is split into rounds of disjoint pairs and a whole round is rotated with
a handful of vectorised row/column updates. Every pair is still visited
once per sweep, so convergence behaviour matches the row-cyclic kernel.
Signatures and in-place semantics mirror ``_jacobi.pyx`` exactly.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _rounds(n):
    m = n + (n % 2)
    players = list(range(m))
    out = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            p, q = zip(*pairs)
            out.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(out)


def _tan_rotation(theta):
    big = np.abs(theta) > 1e150
    safe = np.where(big, 1.0, theta)
    t = np.sign(safe) / (np.abs(safe) + np.sqrt(safe * safe + 1.0))
    t = np.where(safe == 0.0, 1.0, t)
    return np.where(big, 0.5 / np.where(big, theta, 1.0), t)


def _rotate_rows(m, p, q, c, s):
    x = m[p, :]
    y = m[q, :]
    m[p, :] = c[:, None] * x - s[:, None] * y
    m[q, :] = s[:, None] * x + c[:, None] * y


def jacobi_eigh(a, vt, tol, skip, max_sweeps):
    n = a.shape[0]
    rounds = _rounds(n)
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps + 1):
        if np.sqrt(2.0 * np.sum(a[iu] ** 2)) <= tol:
            return sweep
        if sweep == max_sweeps:
            break
        for p, q in rounds:
            apq = a[p, q]
            live = np.abs(apq) > skip
            if not live.any():
                continue
            p, q, apq = p[live], q[live], apq[live]
            app = a[p, p]
            aqq = a[q, q]
            t = _tan_rotation((aqq - app) / (2.0 * apq))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # disjoint pairs in one round interact off the 2x2 blocks, so
            # rows and columns must both be rotated (not mirrored)
            _rotate_rows(a, p, q, c, s)
            x = a[:, p]
            y = a[:, q]
            a[:, p] = x * c - y * s
            a[:, q] = x * s + y * c
            a[p, p] = app - t * apq
            a[q, q] = aqq + t * apq
            a[p, q] = 0.0
            a[q, p] = 0.0
            _rotate_rows(vt, p, q, c, s)
        a += a.T
        a *= 0.5
    return -1


def jacobi_svd_rows(b, vt, tol, max_sweeps):
    n = b.shape[0]
    rounds = _rounds(n)
    for sweep in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            bp = b[p, :]
            bq = b[q, :]
            alpha = np.einsum("ij,ij->i", bp, bp)
            beta = np.einsum("ij,ij->i", bq, bq)
            gamma = np.einsum("ij,ij->i", bp, bq)
            live = (gamma != 0.0) & (np.abs(gamma) > tol * np.sqrt(alpha * beta))
            if not live.any():
                continue
            rotated = True
            p, q = p[live], q[live]
            zeta = (beta[live] - alpha[live]) / (2.0 * gamma[live])
            t = _tan_rotation(zeta)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            _rotate_rows(b, p, q, c, s)
            _rotate_rows(vt, p, q, c, s)
        if not rotated:
            return sweep + 1
    return -1
