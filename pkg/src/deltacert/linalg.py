"""Small dense eigenvalue routines.

Matrices here are tiny (n <= ~14), so plain Householder / Givens / Jacobi
sweeps are fast enough and keep the numerics fully inspectable.
"""
from __future__ import annotations

import numpy as np

from .errors import NoConvergence, NotPositiveDefinite, NotSymmetric

_EPS = np.finfo(float).eps


def hessenberg(A):
    """Reduce a real square matrix to upper Hessenberg form by Householder
    reflections.  Similarity-preserving, so eigenvalues are unchanged."""
    H = np.array(A, dtype=float, copy=True)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        H[k + 1:, :] -= 2.0 * np.outer(v, v @ H[k + 1:, :])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _givens(a, b):
    r = np.hypot(abs(a), abs(b))
    if r == 0.0:
        return 1.0 + 0j, 0j
    return a / r, b / r


def eigenvalues(A, max_iter=500):
    """Eigenvalues of a general real matrix by shifted QR iteration.

    The Hessenberg form is iterated in complex arithmetic with Wilkinson
    shifts (exceptional shifts every 10 stalled sweeps), deflating one
    eigenvalue at a time from the bottom of the active block.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("square matrix required")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    H = hessenberg(A).astype(complex)
    scale = max(np.abs(H).max(), np.finfo(float).tiny)
    eigs = []
    hi = n - 1
    stalled = 0
    total = 0
    while hi >= 0:
        if hi == 0:
            eigs.append(H[0, 0])
            break
        lo = hi
        while lo > 0:
            s = abs(H[lo - 1, lo - 1]) + abs(H[lo, lo])
            if s == 0.0:
                s = scale
            if abs(H[lo, lo - 1]) <= _EPS * s:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs.append(H[hi, hi])
            hi -= 1
            stalled = 0
            continue
        stalled += 1
        total += 1
        if total > max_iter * n:
            raise NoConvergence("QR iteration did not converge")
        a, b = H[hi - 1, hi - 1], H[hi - 1, hi]
        c, d = H[hi, hi - 1], H[hi, hi]
        if stalled % 10 == 0:
            mu = d + 0.75 * abs(c)
        else:
            half_tr = 0.5 * (a + d)
            disc = np.sqrt(half_tr * half_tr - (a * d - b * c))
            mu1, mu2 = half_tr + disc, half_tr - disc
            mu = mu1 if abs(mu1 - d) <= abs(mu2 - d) else mu2
        # explicit shifted QR step on the active block H[lo:hi+1, lo:hi+1]
        B = H[lo:hi + 1, lo:hi + 1]
        m = B.shape[0]
        B -= mu * np.eye(m)
        rots = []
        for k in range(m - 1):
            cs, sn = _givens(B[k, k], B[k + 1, k])
            rk, rk1 = B[k, k:].copy(), B[k + 1, k:].copy()
            B[k, k:] = np.conj(cs) * rk + np.conj(sn) * rk1
            B[k + 1, k:] = -sn * rk + cs * rk1
            rots.append((cs, sn))
        for k, (cs, sn) in enumerate(rots):
            top = min(k + 2, m - 1) + 1
            ck, ck1 = B[:top, k].copy(), B[:top, k + 1].copy()
            B[:top, k] = ck * cs + ck1 * sn
            B[:top, k + 1] = -ck * np.conj(sn) + ck1 * np.conj(cs)
        B += mu * np.eye(m)
        H[lo:hi + 1, lo:hi + 1] = B
    return np.array(eigs[::-1], dtype=complex)


def spectral_radius(A, max_iter=500):
    """Largest eigenvalue magnitude of a (nonsymmetric) square matrix."""
    return float(np.max(np.abs(eigenvalues(A, max_iter=max_iter))))


def jacobi_eigenvalues(S, tol=1e-15, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations (ascending)."""
    A = np.array(S, dtype=float, copy=True)
    n = A.shape[0]
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off == 0.0 or off <= tol * np.linalg.norm(A):
            return np.sort(np.diag(A))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp, colq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp, rowq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
                A[p, q] = A[q, p] = 0.0
    raise NoConvergence("Jacobi sweeps did not converge")


def symmetric_eig_bounds(P, sym_tol=1e-12, require_pd=True):
    """Return (lambda_min, lambda_max) of a symmetric matrix.

    Raises NotSymmetric if ``P`` departs from symmetry by more than
    ``sym_tol`` (relative to its largest entry) and NotPositiveDefinite if
    ``require_pd`` and the smallest eigenvalue is not positive.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise NotSymmetric("square matrix required")
    big = max(1.0, float(np.abs(P).max()))
    if np.abs(P - P.T).max() > sym_tol * big:
        raise NotSymmetric("matrix is not symmetric")
    lam = jacobi_eigenvalues(0.5 * (P + P.T))
    lo, hi = float(lam[0]), float(lam[-1])
    if require_pd and lo <= 0.0:
        raise NotPositiveDefinite(f"lambda_min = {lo:g}")
    return lo, hi
