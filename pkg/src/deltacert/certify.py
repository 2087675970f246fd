"""Delta-robustness certification.

* :func:`theorem_constants` -- closed-form ISS constants from the Lyapunov
  bounds.
* :func:`test_delta` -- the sampled (delta, chi) search.
* :func:`verify_iss_bound`, :func:`check_invariance` -- empirical checks of
  what a certificate promises.
* :func:`barrier_verify_fixed_delta`, :func:`barrier_max_delta` -- the
  probabilistic barrier-function tests.

All norms are Euclidean in scaled coordinates ``z = (x - x*) / scale``.
Random draws come from one Philox stream per (purpose, trial, sample), so
results do not depend on evaluation order or thread count.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from . import rng as _rng
from .errors import BadConstants, DegenerateConfig, HypothesisViolated, NotStable
from .hybrid import IntegratorConfig, Status, guard_gradient_fd
from .lyapunov import decrease_margin_batch, lyap_value
from .poincare import poincare_batch, rollout_batch

__all__ = [
    "TheoremConstants", "theorem_constants", "delta_max", "sample_sphere", "sample_ball",
    "CertifyConfig", "Trial", "DeltaRobustnessCertificate", "test_delta", "sampled_condition",
    "audit_certificate", "ISSReport", "verify_iss_bound", "InvarianceReport", "check_invariance",
    "BarrierVerificationReport", "barrier_verify_fixed_delta", "BarrierMaxResult",
    "barrier_max_delta", "barrier_confidence", "d_grid",
]

log = logging.getLogger(__name__)


# --- theorem constants --------------------------------------------------------

class TheoremConstants(NamedTuple):
    M: float
    alpha: float
    gamma: float
    r_delta: float
    delta_max: float


def _check_constants(k1, k2, k3, c, chi, rho):
    if not (k1 > 0 and k2 >= k1):
        raise BadConstants("need 0 < k1 <= k2")
    if not 0 < k3 < k2:
        raise BadConstants("need 0 < k3 < k2")
    if not c > 0:
        raise BadConstants("need c > 0")
    if not chi > 0:
        raise BadConstants("need chi > 0")
    if not rho > 0:
        raise BadConstants("need rho > 0")


def delta_max(k1, k2, c, chi, rho):
    """Largest admissible delta: ``(k1 / (chi^c k2))^(1/c) * rho``."""
    return (k1 / (chi ** c * k2)) ** (1.0 / c) * rho


def theorem_constants(k1, k2, k3, c, chi, delta, rho):
    """``(M, alpha, gamma, r(delta), delta_max)`` for a robust Lyapunov function.

    Raises HypothesisViolated when ``delta >= delta_max``.
    """
    _check_constants(k1, k2, k3, c, chi, rho)
    if not delta >= 0:
        raise BadConstants("need delta >= 0")
    dmax = delta_max(k1, k2, c, chi, rho)
    if delta >= dmax:
        raise HypothesisViolated(f"delta = {delta:g} >= delta_max = {dmax:g}")
    ratio = (k2 / k1) ** (1.0 / c)
    return TheoremConstants(
        M=ratio,
        alpha=(1.0 - k3 / k2) ** (1.0 / c),
        gamma=ratio * chi,
        r_delta=k2 * (chi * delta) ** c,
        delta_max=dmax,
    )


# --- sampling -------------------------------------------------------------------

def sample_sphere(n, radius, rng):
    """Uniform point on the sphere of given radius in R^n."""
    if n < 1 or radius < 0:
        raise ValueError("need n >= 1 and radius >= 0")
    u = rng.standard_normal(n)
    nu = np.linalg.norm(u)
    while nu == 0.0:  # probability zero, but keep it exact
        u = rng.standard_normal(n)
        nu = np.linalg.norm(u)
    return radius * u / nu


def sample_ball(n, radius, rng):
    """Uniform point in the closed ball of given radius in R^n."""
    direction = sample_sphere(n, 1.0, rng)
    return radius * rng.uniform() ** (1.0 / n) * direction


def _directions(seed, n, count, *key):
    return np.stack([sample_sphere(n, 1.0, _rng.stream(seed, *key, i)) for i in range(count)]) \
        if count else np.zeros((0, n))


def d_grid(delta, n_d):
    """Symmetric grid of ``n_d`` levels over ``[-delta, delta]``, endpoints included."""
    if n_d == 1:
        return np.zeros(1)
    return np.linspace(-delta, delta, n_d)


# --- test_delta -----------------------------------------------------------------

@dataclass(frozen=True)
class CertifyConfig:
    d_step: float = 1e-3
    chi_step: float = 1.0
    chi_max: float = 50.0
    n_samples: int = 64
    k: float = 0.1
    n_d: int = 11
    strict_annulus: bool = False
    seed: int = 0
    max_trials: int = 100_000

    def __post_init__(self):
        if not self.d_step > 0:
            raise DegenerateConfig("d_step must be positive")
        if not self.chi_step > 0:
            raise DegenerateConfig("chi_step must be positive")
        if not self.chi_max >= 0:
            raise DegenerateConfig("chi_max must be non-negative")
        if self.n_samples < 1 or self.n_d < 1:
            raise DegenerateConfig("need at least one sample and one grid level")
        if not 0 < self.k < 1:
            raise DegenerateConfig("k must lie in (0, 1)")


@dataclass(frozen=True)
class Trial:
    delta: float
    chi: float
    worst_margin: float
    passed: bool


def _scaled_states(cert, Z):
    return cert.x_star + Z * cert.scale


def sampled_condition(sys, cert, delta, chi, directions, n_d, k, cfg, threads=1, radii=None):
    """Worst decrease margin over ``x* + r u_i`` and the d-grid.

    ``radii`` defaults to ``chi * delta`` for every direction.
    """
    r = np.full(len(directions), chi * delta) if radii is None else np.asarray(radii, dtype=float)
    Z = directions * r[:, None]
    ds = d_grid(delta, n_d)
    X = np.repeat(_scaled_states(cert, Z), ds.size, axis=0)
    D = np.tile(ds, len(Z))
    m = decrease_margin_batch(sys, cert, X, D, k, cfg, threads)
    return float(np.min(m)) if m.size else math.inf


@dataclass
class DeltaRobustnessCertificate:
    model: str
    state_names: list
    state_units: list
    scale: list
    x_star: list
    period: float
    spectral_radius: float
    delta_star: float
    chi_star: float
    k: float
    k1: float
    k2: float
    k3: float
    c: float
    M: float
    alpha: float
    gamma: Optional[float]
    r_delta: float
    delta_max: Optional[float]
    r1: float
    r2: float
    rho_estimated: float
    P: list
    n_samples: int
    n_d: int
    d_step: float
    chi_step: float
    chi_max: float
    strict_annulus: bool
    seed: int
    trials: List[Trial] = field(default_factory=list)

    @property
    def certified(self):
        return self.delta_star > 0

    def to_dict(self):
        out = asdict(self)
        out["trials"] = [asdict(t) for t in self.trials]
        return out

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        doc["trials"] = [Trial(**t) for t in doc.get("trials", [])]
        return cls(**doc)


def _trial_index(delta_i, chi_i):
    return (int(delta_i), int(chi_i))


def test_delta(sys, orbit, cert, ccfg=CertifyConfig(), rho=None, cfg=IntegratorConfig(), threads=1):
    """Sampled search for the largest certifiable delta.

    Starts at ``delta = d_step, chi = 1``.  A trial passes when every sample
    on the sphere ``|z| = chi delta`` (plus the annulus ``[r1, r2]`` in strict
    mode) has a non-negative decrease margin for every grid ``d``; a pass
    advances delta and resets chi, a failure raises chi.  The search stops
    once chi exceeds ``chi_max``.  Trials with ``delta >= delta_max(chi)``
    fail without sampling.
    """
    if not orbit.stable:
        raise NotStable(f"spectral radius {orbit.spectral_radius:.6g} >= 1")
    if rho is None:
        from .poincare import probe_domain_radius
        rho = probe_domain_radius(sys, orbit.x_star, cfg, seed=ccfg.seed, threads=threads)
    n = cert.x_star.size
    trials: List[Trial] = []
    best = (0.0, 0.0)
    di, ci = 1, 0
    for _ in range(ccfg.max_trials):
        delta = di * ccfg.d_step
        chi = 1.0 + ci * ccfg.chi_step
        if chi > ccfg.chi_max:
            break
        dmax = delta_max(cert.k1, cert.k2, cert.c, chi, rho) if rho > 0 else 0.0
        if delta >= dmax:
            worst = -math.inf
        else:
            key = _trial_index(di, ci)
            U = _directions(ccfg.seed, n, ccfg.n_samples, _rng.SPHERE, *key)
            worst = sampled_condition(sys, cert, delta, chi, U, ccfg.n_d, ccfg.k, cfg, threads)
            if ccfg.strict_annulus and worst >= 0:
                g = _rng.stream(ccfg.seed, _rng.ANNULUS, *key)
                r1 = chi * delta
                r2 = math.sqrt(cert.k2 / cert.k1) * r1
                Ua = _directions(ccfg.seed, n, ccfg.n_samples, _rng.ANNULUS, *key, 1)
                radii = g.uniform(r1, r2, size=ccfg.n_samples)
                worst = min(worst, sampled_condition(sys, cert, delta, chi, Ua, ccfg.n_d, ccfg.k,
                                                     cfg, threads, radii=radii))
        passed = worst >= 0
        trials.append(Trial(delta=delta, chi=chi, worst_margin=worst, passed=passed))
        log.debug("trial delta=%g chi=%g worst=%g pass=%s", delta, chi, worst, passed)
        if passed:
            best = (delta, chi)
            di, ci = di + 1, 0
        else:
            ci += 1
    else:
        log.warning("test_delta stopped after max_trials=%d", ccfg.max_trials)
    return make_certificate(sys, orbit, cert, best[0], best[1], rho, ccfg, trials)


def make_certificate(sys, orbit, cert, delta_star, chi_star, rho, ccfg, trials=()):
    """Assemble a certificate; M, alpha, gamma and r(delta) follow from k1, k2, k3.

    With ``delta_star = 0`` the certificate is vacuous: ``gamma`` and
    ``delta_max`` are reported as None.
    """
    M = (cert.k2 / cert.k1) ** (1.0 / cert.c)
    alpha = (1.0 - cert.k3 / cert.k2) ** (1.0 / cert.c)
    gamma = dmax = None
    r_delta = 0.0
    if delta_star > 0:
        tc = theorem_constants(cert.k1, cert.k2, cert.k3, cert.c, chi_star, delta_star, rho)
        M, alpha, gamma, r_delta, dmax = tc
    r1 = chi_star * delta_star
    return DeltaRobustnessCertificate(
        model=sys.name,
        state_names=list(sys.state_names),
        state_units=list(sys.state_units),
        scale=[float(s) for s in cert.scale],
        x_star=[float(v) for v in orbit.x_star],
        period=float(orbit.period),
        spectral_radius=float(orbit.spectral_radius),
        delta_star=float(delta_star),
        chi_star=float(chi_star),
        k=float(ccfg.k),
        k1=float(cert.k1),
        k2=float(cert.k2),
        k3=float(cert.k3),
        c=float(cert.c),
        M=float(M),
        alpha=float(alpha),
        gamma=None if gamma is None else float(gamma),
        r_delta=float(r_delta),
        delta_max=None if dmax is None else float(dmax),
        r1=float(r1),
        r2=float(math.sqrt(cert.k2 / cert.k1) * r1),
        rho_estimated=float(rho),
        P=[[float(v) for v in row] for row in cert.P],
        n_samples=int(ccfg.n_samples),
        n_d=int(ccfg.n_d),
        d_step=float(ccfg.d_step),
        chi_step=float(ccfg.chi_step),
        chi_max=float(ccfg.chi_max),
        strict_annulus=bool(ccfg.strict_annulus),
        seed=int(ccfg.seed),
        trials=list(trials),
    )


def _lyap_from_certificate(dcert):
    from .lyapunov import RobustLyapunovCertificate
    n = len(dcert.x_star)
    return RobustLyapunovCertificate(
        P=np.array(dcert.P), Q=np.eye(n), k1=dcert.k1, k2=dcert.k2, k3=dcert.k3,
        x_star=np.array(dcert.x_star), scale=np.array(dcert.scale), k=dcert.k, c=dcert.c,
        chi=dcert.chi_star if dcert.chi_star > 0 else 1.0)


def audit_certificate(sys, dcert, factor=10, seed=None, cfg=IntegratorConfig(), threads=1):
    """Fresh ``factor * n_samples`` sphere samples at ``chi* delta*``; returns the worst margin."""
    if dcert.delta_star <= 0:
        return math.inf
    lc = _lyap_from_certificate(dcert)
    seed = dcert.seed if seed is None else seed
    U = _directions(seed, len(dcert.x_star), factor * dcert.n_samples, _rng.AUDIT)
    return sampled_condition(sys, lc, dcert.delta_star, dcert.chi_star, U, dcert.n_d, dcert.k, cfg, threads)


# --- ISS bound ------------------------------------------------------------------

@dataclass
class ISSReport:
    delta: float
    num_rollouts: int
    K: int
    seed: int
    violations: int
    truncations: int
    worst_slack: float
    rows: list = field(default_factory=list, repr=False)

    @property
    def ok(self):
        return self.violations == 0 and self.truncations == 0

    def summary(self):
        d = asdict(self)
        d.pop("rows")
        return d


def _ellipsoid_factor(P):
    # z = L^-T u maps the unit ball onto {z : z^T P z <= 1}
    L = np.linalg.cholesky(P)
    return np.linalg.inv(L).T


def verify_iss_bound(sys, dcert, num_rollouts=1000, K=50, seed=0, delta=None,
                     cfg=IntegratorConfig(), threads=1, keep_rows=False, atol=1e-9):
    """Roll out from uniform draws in ``W = {V <= r(delta)}`` with i.i.d.
    ``d_k ~ U(-delta, delta)`` and check
    ``|x_k - x*| <= M alpha^k |x_0 - x*| + gamma delta`` at every step.

    ``delta`` defaults to the certified value; overriding it (with ``r`` and
    the bound recomputed at that delta) is how over-claiming is exposed.
    A step counts as a violation when it exceeds the bound by more than
    ``atol`` (the fixed point itself is only known to ~1e-10).
    """
    delta = dcert.delta_star if delta is None else float(delta)
    n = len(dcert.x_star)
    x_star = np.array(dcert.x_star)
    scale = np.array(dcert.scale)
    P = np.array(dcert.P)
    chi = dcert.chi_star if dcert.chi_star > 0 else 1.0
    M, alpha = dcert.M, dcert.alpha
    gamma = dcert.gamma if dcert.gamma is not None else M * chi
    r = dcert.k2 * (chi * delta) ** dcert.c
    F = _ellipsoid_factor(P)
    Z0 = np.zeros((num_rollouts, n))
    D = np.zeros((num_rollouts, K))
    for i in range(num_rollouts):
        Z0[i] = F @ sample_ball(n, math.sqrt(r), _rng.stream(seed, _rng.ISS_INIT, i))
        D[i] = _rng.stream(seed, _rng.ISS_DIST, i).uniform(-delta, delta, size=K) if delta > 0 else 0.0
    X0 = x_star + Z0 * scale
    res = rollout_batch(sys, X0, D, cfg, threads)
    dist0 = np.linalg.norm(Z0, axis=1)
    dist = np.linalg.norm((res.states - x_star) / scale, axis=2)  # (m, K), NaN after truncation
    ks = np.arange(1, K + 1)
    bound = M * alpha ** ks[None, :] * dist0[:, None] + gamma * delta
    valid = ~np.isnan(dist)
    slack = np.where(valid, bound - dist, np.inf)
    violated = valid & (slack < -atol)
    rows = []
    if keep_rows:
        for i in range(num_rollouts):
            for k in range(K):
                if valid[i, k]:
                    rows.append((i, k + 1, dist[i, k], bound[i, k], bool(violated[i, k])))
    worst = float(np.min(slack)) if slack.size and np.isfinite(slack).any() else math.inf
    return ISSReport(delta=delta, num_rollouts=num_rollouts, K=K, seed=seed,
                     violations=int(violated.sum()), truncations=int((res.truncated_at >= 0).sum()),
                     worst_slack=worst, rows=rows)


# --- forward invariance -------------------------------------------------------

@dataclass
class InvarianceReport:
    passed: bool
    worst_excess: float
    r_delta: float
    n_boundary: int
    seed: int


def check_invariance(sys, dcert, n_boundary=256, seed=0, r_delta=None,
                     cfg=IntegratorConfig(), threads=1):
    """Map boundary points of ``Omega_r`` through every grid ``P_d``; passes
    when ``V(P_d(x)) <= r`` throughout (domain escapes count as +inf excess)."""
    r = dcert.r_delta if r_delta is None else float(r_delta)
    delta = dcert.delta_star
    if r <= 0:
        return InvarianceReport(True, 0.0, 0.0, n_boundary, seed)
    lc = _lyap_from_certificate(dcert)
    n = len(dcert.x_star)
    F = _ellipsoid_factor(lc.P)
    U = _directions(seed, n, n_boundary, _rng.INVARIANCE)
    Z = (U @ F.T) * math.sqrt(r)
    ds = d_grid(delta, dcert.n_d)
    X = np.repeat(_scaled_states(lc, Z), ds.size, axis=0)
    Y, _, st = poincare_batch(sys, X, np.tile(ds, len(Z)), cfg, threads)
    excess = np.full(X.shape[0], np.inf)
    ok = st == Status.OK
    excess[ok] = lyap_value(lc, Y[ok]) - r
    worst = float(np.max(excess))
    return InvarianceReport(worst <= 0, worst, r, n_boundary, seed)


# --- barrier verification -----------------------------------------------------

def barrier_confidence(eps, N):
    """``1 - (1 - eps)^N``."""
    return 1.0 - (1.0 - eps) ** N


@dataclass
class BarrierVerificationReport:
    delta: float
    gamma_b: float
    N: int
    eps: float
    worst_margin: float
    verdict: bool
    confidence: float
    seed: int
    d_minus: float
    d_plus: float
    worst_value: float
    pass_fraction: float

    def to_dict(self):
        return asdict(self)


def _guard_slope(sys, x_star):
    x = np.asarray(x_star, dtype=float)
    grad = sys.guard_gradient(x) if sys.guard_gradient is not None else guard_gradient_fd(sys, x)
    return float(np.linalg.norm(grad * np.asarray(sys.scale, dtype=float)))


def barrier_verify_fixed_delta(sys, orbit, delta, gamma_b=0.5, N=100, eps=0.05, n_d=11, seed=0,
                               cfg=IntegratorConfig(), threads=1, rtol=1e-9):
    """Sampled check of ``min_d H(P_d(x)) >= (1 - gamma_b) H(x)`` with
    ``H(x) = delta^2 - |z|^2`` for ``N`` uniform draws in the ball of radius delta.

    ``r_i`` is 1 when the inequality holds at sample ``i`` for every grid
    level; the verdict passes when all ``r_i`` are 1.  Values down to
    ``-rtol * delta^2`` count as holding, so images landing exactly on the
    sphere are not rejected for roundoff.
    """
    if not 0 < gamma_b <= 1:
        raise DegenerateConfig("gamma_b must lie in (0, 1]")
    if not delta > 0:
        raise DegenerateConfig("delta must be positive")
    x_star = np.asarray(orbit.x_star, dtype=float)
    scale = np.asarray(sys.scale, dtype=float)
    n = x_star.size
    span = delta * _guard_slope(sys, x_star)
    ds = d_grid(span, n_d)
    Z = np.stack([sample_ball(n, delta, _rng.stream(seed, _rng.BARRIER, i)) for i in range(N)])
    X = np.repeat(x_star + Z * scale, ds.size, axis=0)
    Y, _, st = poincare_batch(sys, X, np.tile(ds, N), cfg, threads)
    H_next = np.full(X.shape[0], -np.inf)
    ok = st == Status.OK
    H_next[ok] = delta ** 2 - np.sum(((Y[ok] - x_star) / scale) ** 2, axis=1)
    H_next = H_next.reshape(N, ds.size).min(axis=1)
    H0 = delta ** 2 - np.sum(Z ** 2, axis=1)
    value = H_next - (1.0 - gamma_b) * H0
    r = value >= -rtol * delta ** 2
    return BarrierVerificationReport(
        delta=float(delta), gamma_b=float(gamma_b), N=int(N), eps=float(eps),
        worst_margin=float(r.min()), verdict=bool(r.all()), confidence=barrier_confidence(eps, N),
        seed=int(seed), d_minus=-span, d_plus=span, worst_value=float(value.min()),
        pass_fraction=float(r.mean()))


@dataclass
class BarrierMaxResult:
    delta_star: float
    confidence: float
    empty: bool
    accepted: list
    reports: list

    def to_dict(self):
        return {"delta_star": self.delta_star, "confidence": self.confidence, "empty": self.empty,
                "accepted": list(self.accepted), "reports": [r.to_dict() for r in self.reports]}


def barrier_max_delta(sys, orbit, delta_hi, N_outer=20, N_inner=100, eps=0.05, gamma_b=0.5,
                      n_d=11, seed=0, delta_lo=0.0, cfg=IntegratorConfig(), threads=1):
    """Draw ``delta' ~ U(delta_lo, delta_hi]``, keep those whose fixed-delta
    check passes and return the largest.  ``empty`` flags that none passed
    (``delta_star = 0``).  Confidence uses ``N_outer``.
    """
    if not delta_hi > 0 or delta_lo < 0 or delta_lo > delta_hi:
        raise DegenerateConfig("need 0 <= delta_lo <= delta_hi and delta_hi > 0")
    accepted, reports = [], []
    for j in range(N_outer):
        g = _rng.stream(seed, _rng.BARRIER_OUTER, j)
        # (lo, hi] by reflecting the half-open [0, 1) draw
        dj = delta_hi - (delta_hi - delta_lo) * g.uniform()
        if dj <= 0:
            continue
        rep = barrier_verify_fixed_delta(sys, orbit, dj, gamma_b, N_inner, eps, n_d,
                                         seed=int(_rng.stream(seed, _rng.BARRIER_OUTER, j, 1).integers(2**63)),
                                         cfg=cfg, threads=threads)
        reports.append(rep)
        if rep.verdict:
            accepted.append(dj)
    best = max(accepted) if accepted else 0.0
    return BarrierMaxResult(delta_star=float(best), confidence=barrier_confidence(eps, N_outer),
                            empty=not accepted, accepted=accepted, reports=reports)


# keep pytest from collecting the algorithm when it is imported into a test module
test_delta.__test__ = False
