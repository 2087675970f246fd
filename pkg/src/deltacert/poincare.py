"""Extended return map, periodic orbits and disturbed rollouts.

The map ``P_d`` applies the reset to a pre-impact state and flows to the
next downward crossing of ``h = d``.  It is a partial function: rows that
leave its domain come back with a non-zero :class:`Status` and NaN states.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as _rng
from .errors import DomainEscape, NoConvergence, SingularJacobian
from .hybrid import IntegratorConfig, Status, impact_batch, raise_for_status, reset_batch
from .linalg import eigenvalues, spectral_radius

__all__ = [
    "PeriodicOrbit", "DisturbanceSequence", "RolloutResult", "BatchRollout",
    "poincare_batch", "poincare_extended", "rollout", "rollout_batch",
    "find_fixed_point", "linearize", "probe_domain_radius", "spectral_radius",
    "resolve_threads",
]

log = logging.getLogger(__name__)


def resolve_threads(threads):
    """``0`` means one worker per CPU."""
    threads = int(threads or 0)
    return max(1, os.cpu_count() or 1) if threads <= 0 else threads


@dataclass(frozen=True)
class PeriodicOrbit:
    x_star: np.ndarray
    period: float
    A: np.ndarray
    spectral_radius: float
    residual: float
    iterations: int = 0

    @property
    def stable(self):
        return self.spectral_radius < 1.0

    @property
    def eigenvalues(self):
        return eigenvalues(self.A)


@dataclass(frozen=True)
class DisturbanceSequence:
    """Guard offsets ``d_0 .. d_{K-1}``, each within ``[-delta, delta]``."""

    values: np.ndarray
    delta: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "values", v)
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if v.size and np.max(np.abs(v)) > self.delta:
            raise ValueError("disturbance exceeds the declared delta")

    def __len__(self):
        return self.values.size

    @classmethod
    def zeros(cls, K):
        return cls(np.zeros(int(K)), 0.0)

    @classmethod
    def uniform(cls, K, delta, seed, key=0):
        g = _rng.stream(seed, _rng.SIMULATE, key)
        return cls(g.uniform(-delta, delta, size=int(K)), delta)


# --- the map -----------------------------------------------------------------

def _map_chunk(sys, X, d, cfg):
    m = X.shape[0]
    Y = np.full_like(X, np.nan)
    T = np.full(m, np.nan)
    status = np.full(m, int(Status.RESET_DOMAIN))
    Xp, ok = reset_batch(sys, X)
    if ok.any():
        t, y, st = impact_batch(sys, Xp[ok], d[ok], cfg)
        good = st == Status.OK
        idx = np.nonzero(ok)[0]
        status[idx] = st
        Y[idx[good]] = y[good]
        T[idx[good]] = t[good]
    return Y, T, status


def poincare_batch(sys, X, d, cfg=IntegratorConfig(), threads=1):
    """Evaluate ``P_{d_i}(x_i)`` for every row.

    Returns ``(Y, T, status)``.  Rows are split into contiguous chunks across
    ``threads`` workers; since the integrator treats rows independently the
    result does not depend on the thread count.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    d = np.broadcast_to(np.asarray(d, dtype=float), (m,)).copy()
    workers = min(resolve_threads(threads), m) if m else 1
    if workers <= 1:
        return _map_chunk(sys, X, d, cfg)
    bounds = np.linspace(0, m, workers + 1).astype(int)
    parts = [(bounds[i], bounds[i + 1]) for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        res = list(ex.map(lambda ab: _map_chunk(sys, X[ab[0]:ab[1]], d[ab[0]:ab[1]], cfg), parts))
    return (np.concatenate([r[0] for r in res]),
            np.concatenate([r[1] for r in res]),
            np.concatenate([r[2] for r in res]))


def poincare_extended(sys, x_minus, d, cfg=IntegratorConfig()):
    """``P_d(x-)``: reset, then flow to the first downward crossing of ``h = d``.

    Raises a :class:`DomainEscape` subclass when ``x-`` is outside the
    domain of the partial map.
    """
    Y, _, st = _map_chunk(sys, np.asarray(x_minus, dtype=float)[None], np.array([float(d)]), cfg)
    raise_for_status(st[0], f"P_d at d={d:g}")
    return Y[0]


# --- rollouts -----------------------------------------------------------------

@dataclass(frozen=True)
class RolloutResult:
    """Iterates ``x_1 .. x_K`` (fewer when truncated).

    ``truncated_at`` is the index ``k`` of the step ``x_k -> x_{k+1}`` that
    left the map's domain, ``status`` the reason.
    """

    states: np.ndarray
    truncated_at: Optional[int] = None
    status: Status = Status.OK

    @property
    def truncated(self):
        return self.truncated_at is not None


def rollout(sys, x0, ds, cfg=IntegratorConfig()):
    """Iterate ``x_{k+1} = P_{d_k}(x_k)``; domain escapes end the run early."""
    values = ds.values if isinstance(ds, DisturbanceSequence) else np.asarray(ds, dtype=float)
    x = np.asarray(x0, dtype=float)
    out = []
    for k, d in enumerate(values):
        Y, _, st = _map_chunk(sys, x[None], np.array([d]), cfg)
        if st[0] != Status.OK:
            return RolloutResult(np.array(out).reshape(-1, x.size), k, Status(int(st[0])))
        x = Y[0]
        out.append(x)
    return RolloutResult(np.array(out).reshape(-1, x.size))


@dataclass(frozen=True)
class BatchRollout:
    """Stacked rollouts: ``states[i, k]`` is ``x_{k+1}`` of rollout ``i``
    (NaN after truncation); ``truncated_at[i] = -1`` when complete."""

    states: np.ndarray
    truncated_at: np.ndarray
    status: np.ndarray


def rollout_batch(sys, X0, D, cfg=IntegratorConfig(), threads=1):
    """Advance ``m`` rollouts in lock step; ``D`` has shape ``(m, K)``."""
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    m, n = X0.shape
    K = D.shape[1]
    states = np.full((m, K, n), np.nan)
    trunc = np.full(m, -1)
    status = np.zeros(m, dtype=int)
    x = X0.copy()
    alive = np.arange(m)
    for k in range(K):
        if alive.size == 0:
            break
        Y, _, st = poincare_batch(sys, x[alive], D[alive, k], cfg, threads)
        bad = st != Status.OK
        trunc[alive[bad]] = k
        status[alive[bad]] = st[bad]
        alive = alive[~bad]
        x[alive] = Y[~bad]
        states[alive, k] = Y[~bad]
    return BatchRollout(states, trunc, status)


# --- orbits --------------------------------------------------------------------

def _project_to_guard(sys, x, iters=20):
    from .hybrid import guard_gradient_fd
    x = np.array(x, dtype=float)
    for _ in range(iters):
        h = float(sys.guard(x))
        if abs(h) <= 1e-14:
            break
        g = sys.guard_gradient(x) if sys.guard_gradient is not None else guard_gradient_fd(sys, x)
        gg = float(g @ g)
        if gg == 0.0:
            break
        x = x - h * g / gg
    return x


def linearize(sys, x_star, fd_step=1e-6, cfg=IntegratorConfig(), min_step=1e-9, threads=1):
    """Central-difference Jacobian of ``P_0`` at ``x_star``.

    Column ``i`` uses step ``fd_step * (1 + |x_i|)``.  When a perturbed point
    leaves the map's domain the whole Jacobian is retried with the step
    divided by ten, down to ``min_step``.
    """
    x_star = np.asarray(x_star, dtype=float)
    n = x_star.size
    step = float(fd_step)
    while True:
        hs = step * (1.0 + np.abs(x_star))
        E = np.diag(hs)
        X = np.concatenate([x_star + E, x_star - E])
        Y, _, st = poincare_batch(sys, X, 0.0, cfg, threads)
        if np.all(st == Status.OK):
            return ((Y[:n] - Y[n:]) / (2.0 * hs)[:, None]).T
        if step / 10.0 < min_step * (1 - 1e-12):
            raise_for_status(st[st != Status.OK][0], "linearize")
        log.debug("linearize: domain escape at fd step %g, retrying smaller", step)
        step /= 10.0


def find_fixed_point(sys, x_guess, cfg=IntegratorConfig(), tol=1e-9, max_iter=50,
                     fd_step=1e-6, threads=1):
    """Damped Newton shooting on ``F(x) = P_0(x) - x``.

    The guess is first projected onto ``h = 0``.  Converged when
    ``|F| <= tol * (1 + |x|)``; a step is halved up to eight times while it
    fails to reduce ``|F|``.
    """
    x = _project_to_guard(sys, x_guess)

    def residual(z):
        Y, T, st = poincare_batch(sys, z, 0.0, cfg)
        if st[0] != Status.OK:
            return None, None
        return Y[0] - z, T[0]

    F, T = residual(x)
    if F is None:
        raise NoConvergence("initial guess is outside the return map's domain")
    it = 0
    while np.linalg.norm(F) > tol * (1.0 + np.linalg.norm(x)):
        if it >= max_iter:
            raise NoConvergence(f"no fixed point after {max_iter} Newton steps (|F| = {np.linalg.norm(F):.3g})")
        it += 1
        try:
            J = linearize(sys, x, fd_step, cfg, threads=threads) - np.eye(x.size)
        except DomainEscape as exc:
            raise NoConvergence(f"Jacobian undefined near iterate: {exc}") from exc
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
            raise SingularJacobian("Newton matrix DP - I is singular")
        s = np.linalg.solve(J, -F)
        fn = np.linalg.norm(F)
        lam = 1.0
        for _ in range(9):
            F_new, T_new = residual(x + lam * s)
            if F_new is not None and np.linalg.norm(F_new) < fn:
                break
            lam *= 0.5
        else:
            raise NoConvergence("line search failed to reduce the residual")
        x, F, T = x + lam * s, F_new, T_new
        log.debug("newton %d: |F| = %.3e (lambda = %g)", it, np.linalg.norm(F), lam)
    # report the map's own output so the orbit lies on the guard exactly
    A = linearize(sys, x, fd_step, cfg, threads=threads)
    return PeriodicOrbit(
        x_star=x,
        period=float(T),
        A=A,
        spectral_radius=spectral_radius(A),
        residual=float(np.linalg.norm(F)),
        iterations=it,
    )


def probe_domain_radius(sys, x_star, cfg=IntegratorConfig(), seed=0, r0=1e-3, growth=1.5,
                        n_samples=32, r_max=1e3, threads=1):
    """Estimate the radius of the ball around ``x_star`` on which ``P_0`` is defined.

    Radii grow geometrically from ``r0``; at each radius ``n_samples`` points
    on the sphere (in scaled coordinates) are mapped.  Returns the last
    radius at which every sample was valid (0 if the first fails).
    """
    x_star = np.asarray(x_star, dtype=float)
    scale = np.asarray(sys.scale, dtype=float)
    n = x_star.size
    last, r, level = 0.0, float(r0), 0
    while r <= r_max:
        Z = np.stack([_rng.stream(seed, _rng.PROBE, level, i).standard_normal(n) for i in range(n_samples)])
        Z *= r / np.linalg.norm(Z, axis=1, keepdims=True)
        _, _, st = poincare_batch(sys, x_star + Z * scale, 0.0, cfg, threads)
        if np.any(st != Status.OK):
            break
        last = r
        r *= growth
        level += 1
    return last
