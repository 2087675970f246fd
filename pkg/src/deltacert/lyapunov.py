"""Quadratic Lyapunov functions for the linearized return map.

Everything here works in scaled coordinates ``z = (x - x*) / scale``; the
scale vector travels with the certificate so that norms of mixed-unit states
stay interpretable.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BadConstants, NoConvergence, NotStable
from .hybrid import IntegratorConfig, Status
from .linalg import spectral_radius, symmetric_eig_bounds

__all__ = [
    "RobustLyapunovCertificate", "solve_discrete_lyapunov", "lyapunov_residual",
    "build_certificate", "lyap_value", "decrease_margin", "decrease_margin_batch",
    "symmetric_eig_bounds",
]


def _doubling_series(A, Q, tol=1e-14, max_doublings=64):
    # P_{j+1} = P_j + A_j^T P_j A_j with A_{j+1} = A_j^2 sums 2^j terms per pass
    P = np.array(Q, dtype=float)
    Ak = np.array(A, dtype=float)
    for _ in range(max_doublings):
        term = Ak.T @ P @ Ak
        P = P + term
        if np.linalg.norm(term) < tol * np.linalg.norm(P):
            return P
        Ak = Ak @ Ak
    raise NoConvergence("Lyapunov series did not converge")


def lyapunov_residual(A, P, Q):
    A, P, Q = (np.asarray(M, dtype=float) for M in (A, P, Q))
    return A.T @ P @ A - P + Q


def solve_discrete_lyapunov(A, Q=None):
    """Solve ``A^T P A - P = -Q`` for symmetric ``P``.

    Sums ``P = sum_j (A^T)^j Q A^j`` by squaring, then runs one correction
    pass on the residual and symmetrizes.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    Q = np.eye(n) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("A and Q must be square and of equal size")
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise NotStable(f"spectral radius {rho:.6g} >= 1")
    P = _doubling_series(A, Q)
    R = lyapunov_residual(A, P, Q)
    # A^T E A - E = -R is the same equation with Q replaced by R
    if np.linalg.norm(R) > 0:
        P = P + _doubling_series(A, R)
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class RobustLyapunovCertificate:
    """``V(x) = z^T P z`` with ``z = (x - x*) / scale``.

    ``k1``/``k2`` bound ``V`` by ``|z|^2``; ``k3`` is the verified decrease
    constant, ``c = 2`` the exponent and ``chi`` the disturbance gain.
    """

    P: np.ndarray
    Q: np.ndarray
    k1: float
    k2: float
    k3: float
    x_star: np.ndarray
    scale: np.ndarray
    k: float = 0.1
    c: float = 2.0
    chi: float = 1.0
    A_scaled: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.k1 <= self.k2:
            raise BadConstants("need 0 < k1 <= k2")
        if not 0 < self.k3 < self.k2:
            raise BadConstants("need 0 < k3 < k2 so that alpha lies in (0, 1)")
        if not 0 < self.k < 1:
            raise BadConstants("k must lie in (0, 1)")

    # alternate form of the definition: k3 = k4 / 2, chi = (sigma / k4)^(1/c)
    @property
    def k4(self):
        return 2.0 * self.k3

    @property
    def sigma(self):
        return self.k4 * self.chi ** self.c

    def chi_from_sigma(self):
        return (self.sigma / self.k4) ** (1.0 / self.c)

    def with_chi(self, chi):
        return replace(self, chi=float(chi))

    def to_scaled(self, x):
        return (np.asarray(x, dtype=float) - self.x_star) / self.scale

    def from_scaled(self, z):
        return self.x_star + np.asarray(z, dtype=float) * self.scale


def build_certificate(orbit, scale=None, Q=None, k=0.1):
    """Lyapunov certificate for a stable orbit, with ``k3 = k``."""
    x_star = np.asarray(orbit.x_star, dtype=float)
    n = x_star.size
    scale = np.ones(n) if scale is None else np.asarray(scale, dtype=float)
    A_z = (orbit.A * scale[None, :]) / scale[:, None]
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    P = solve_discrete_lyapunov(A_z, Q)
    k1, k2 = symmetric_eig_bounds(P)
    return RobustLyapunovCertificate(P=P, Q=Q, k1=k1, k2=k2, k3=float(k), x_star=x_star,
                                     scale=scale, k=float(k), A_scaled=A_z)


def lyap_value(cert, x):
    """``(x - x*)^T P (x - x*)`` in scaled coordinates; accepts stacked states."""
    z = cert.to_scaled(x)
    return np.einsum("...i,ij,...j->...", z, cert.P, z)


def decrease_margin_batch(sys, cert, X, d, k=None, cfg=IntegratorConfig(), threads=1):
    """Row-wise ``-(V(P_d(x)) - V(x)) - k |z|^2``; ``-inf`` off the map's domain."""
    from .poincare import poincare_batch

    k = cert.k if k is None else k
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y, _, st = poincare_batch(sys, X, d, cfg, threads)
    z = cert.to_scaled(X)
    ok = st == Status.OK
    m = np.full(X.shape[0], -np.inf)
    m[ok] = -(lyap_value(cert, Y[ok]) - lyap_value(cert, X[ok])) - k * np.sum(z[ok] ** 2, axis=1)
    return m


def decrease_margin(sys, cert, x, d, k=None, cfg=IntegratorConfig()):
    """Margin of the sampled decrease condition at ``(x, d)``; ``>= 0`` means it holds."""
    return float(decrease_margin_batch(sys, cert, np.asarray(x, dtype=float)[None], d, k, cfg)[0])
