import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from deltacert import certify, models, rng
from deltacert.certify import (
    CertifyConfig, audit_certificate, barrier_confidence, barrier_max_delta, barrier_verify_fixed_delta,
    check_invariance, d_grid, sample_ball, sample_sphere, sampled_condition, test_delta, theorem_constants,
    verify_iss_bound,
)
from deltacert.errors import BadConstants, DegenerateConfig, HypothesisViolated, NotStable
from deltacert.poincare import DisturbanceSequence, PeriodicOrbit, poincare_batch, rollout

from conftest import fragile

P_SCALAR = 1 / 0.36


# --- theorem constants ----------------------------------------------------------

def test_theorem_constants_scalar_example():
    tc = theorem_constants(P_SCALAR, P_SCALAR, 1.0, 2.0, 3.0, 0.01, 1.0)
    assert tc.M == 1.0
    assert tc.alpha == pytest.approx(0.8, rel=1e-14)
    assert tc.gamma == 3.0
    assert tc.r_delta == pytest.approx(2.5e-3, rel=1e-12)
    assert tc.delta_max == pytest.approx(1 / 3, rel=1e-14)


def test_theorem_constants_rejects_large_delta():
    with pytest.raises(HypothesisViolated):
        theorem_constants(P_SCALAR, P_SCALAR, 1.0, 2.0, 3.0, 1 / 3, 1.0)


@pytest.mark.parametrize("args", [
    (0.0, 1.0, 0.5, 2.0, 1.0, 0.01, 1.0),   # k1 = 0
    (2.0, 1.0, 0.5, 2.0, 1.0, 0.01, 1.0),   # k1 > k2
    (1.0, 2.0, 2.0, 2.0, 1.0, 0.01, 1.0),   # k3 = k2
    (1.0, 2.0, 0.5, 0.0, 1.0, 0.01, 1.0),   # c = 0
    (1.0, 2.0, 0.5, 2.0, 0.0, 0.01, 1.0),   # chi = 0
    (1.0, 2.0, 0.5, 2.0, 1.0, 0.01, 0.0),   # rho = 0
    (1.0, 2.0, 0.5, 2.0, 1.0, -0.01, 1.0),  # delta < 0
])
def test_theorem_constants_bad(args):
    with pytest.raises(BadConstants):
        theorem_constants(*args)


pos = st.floats(1e-3, 1e3)


@given(pos, st.floats(1.0, 100.0), st.floats(0.01, 0.99), st.floats(0.5, 4.0), pos, st.floats(0.01, 0.99), pos)
def test_theorem_constants_properties(k1, ratio, k3_frac, c, chi, delta_frac, rho):
    k2 = k1 * ratio
    dmax = certify.delta_max(k1, k2, c, chi, rho)
    tc = theorem_constants(k1, k2, k3_frac * k2, c, chi, delta_frac * dmax, rho)
    assert tc.M >= 1.0 and 0 < tc.alpha < 1
    assert tc.gamma == pytest.approx(tc.M * chi, rel=1e-12)
    # W = Omega_r sits inside the probed ball: r(delta) < k1 rho^c
    assert tc.r_delta < k1 * rho ** c * (1 + 1e-12)
    with pytest.raises(HypothesisViolated):
        theorem_constants(k1, k2, k3_frac * k2, c, chi, dmax * (1 + 1e-9), rho)


@given(pos, pos, pos)
def test_equal_bounds_give_unit_overshoot(k, chi, delta):
    assume(delta < certify.delta_max(k, k, 2.0, chi, 1e6))
    tc = theorem_constants(k, k, k / 2, 2.0, chi, delta, 1e6)
    assert tc.M == 1.0 and tc.gamma == chi


def test_alpha_limit():
    assert theorem_constants(1.0, 1.0, 1.0 - 1e-12, 2.0, 1.0, 0.1, 1.0).alpha < 1e-5


# --- sampling --------------------------------------------------------------------

def test_sphere_edge_cases():
    g = np.random.default_rng(0)
    assert np.array_equal(sample_sphere(3, 0.0, g), np.zeros(3))
    signs = [sample_sphere(1, 2.0, g)[0] for _ in range(2000)]
    assert set(signs) == {-2.0, 2.0}
    assert abs(np.mean(np.array(signs) > 0) - 0.5) < 4 * 0.5 / math.sqrt(2000)


@given(st.integers(1, 8), st.just(0.0) | st.floats(1e-100, 1e3), st.integers(0, 2**32))
def test_sphere_radius(n, r, seed):
    u = sample_sphere(n, r, np.random.default_rng(seed))
    assert np.linalg.norm(u) == pytest.approx(r, rel=1e-12, abs=1e-300)



def _ks_uniform(u):
    # Kolmogorov-Smirnov statistic against U(0, 1)
    u = np.sort(u)
    i = np.arange(1, u.size + 1)
    return max(np.max(i / u.size - u), np.max(u - (i - 1) / u.size))


@pytest.mark.parametrize("n", [1, 2, 4])
def test_ball_uniformity(n):
    g = np.random.default_rng(123 + n)
    N = 100_000
    X = np.stack([sample_ball(n, 2.0, g) for _ in range(N)])
    # mean within 4 sigma of zero per coordinate
    sigma = np.sqrt(4.0 / (n + 2)) / math.sqrt(N)
    assert np.all(np.abs(X.mean(axis=0)) < 4 * sigma)
    # (|x| / R)^n is U(0, 1); 1.63 / sqrt(N) is the 1% KS critical value
    u = (np.linalg.norm(X, axis=1) / 2.0) ** n
    assert _ks_uniform(u) < 1.63 / math.sqrt(N)


def test_d_grid():
    assert np.allclose(d_grid(0.1, 11), np.linspace(-0.1, 0.1, 11))
    assert d_grid(0.1, 11)[0] == -0.1 and d_grid(0.1, 11)[-1] == 0.1
    assert np.array_equal(d_grid(0.1, 1), [0.0])


def test_streams_are_keyed():
    a = rng.stream(0, rng.SPHERE, 1, 2, 3).standard_normal(4)
    b = rng.stream(0, rng.SPHERE, 1, 2, 3).standard_normal(4)
    c = rng.stream(0, rng.SPHERE, 1, 2, 4).standard_normal(4)
    d = rng.stream(1, rng.SPHERE, 1, 2, 3).standard_normal(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c) and not np.array_equal(a, d)


# --- test_delta --------------------------------------------------------------------

def test_ball_certified(ball_cert):
    assert ball_cert.certified
    assert ball_cert.delta_star < ball_cert.delta_max
    assert ball_cert.r1 == pytest.approx(ball_cert.chi_star * ball_cert.delta_star)
    assert ball_cert.gamma == pytest.approx(ball_cert.M * ball_cert.chi_star)
    last = [t for t in ball_cert.trials if t.passed][-1]
    assert (last.delta, last.chi) == (ball_cert.delta_star, ball_cert.chi_star)
    # the search only ends by exhausting chi at delta* + d_step
    tail = [t for t in ball_cert.trials if t.delta > ball_cert.delta_star]
    assert tail and not any(t.passed for t in tail) and tail[-1].chi == ball_cert.chi_max


def test_trace_follows_recursion(ball_cert):
    prev = None
    for t in ball_cert.trials:
        if prev is not None:
            if prev.passed:
                assert t.delta == pytest.approx(prev.delta + ball_cert.d_step) and t.chi == 1.0
            else:
                assert t.delta == prev.delta and t.chi == prev.chi + ball_cert.chi_step
        prev = t


def test_certificate_soundness_audit(ball, ball_cert):
    assert audit_certificate(ball, ball_cert, factor=10) >= 0


def _oracle_margin(p, P, x_star, R, D):
    # closed-form map margin on a dense (angle, d) grid for the 2-state ball
    th = np.linspace(0, 2 * np.pi, 721)[:-1]
    Z = R * np.stack([np.cos(th), np.sin(th)], axis=1)
    out = np.inf
    for d in D:
        X = x_star + Z
        v_next = models.ball_analytic_map(p, X[:, 1], X[:, 0], d)
        Zn = np.stack([np.full_like(v_next, d), v_next], axis=1) - x_star
        m = -(np.einsum("ij,jk,ik->i", Zn, P, Zn) - np.einsum("ij,jk,ik->i", Z, P, Z)) \
            - 0.1 * np.sum(Z * Z, axis=1)
        m = np.where(np.isnan(m), -np.inf, m)
        out = min(out, m.min())
    return out


def test_ball_certificate_against_dense_oracle(ball_cert):
    p = models.BouncingBallParams()
    P, xs = np.array(ball_cert.P), np.array(ball_cert.x_star)
    ds, chi = ball_cert.delta_star, ball_cert.chi_star
    assert _oracle_margin(p, P, xs, chi * ds, np.linspace(-ds, ds, 41)) >= -1e-9
    # the next delta level fails on the dense grid for every chi the search tried
    nd = ds + ball_cert.d_step
    for chi in range(1, int(ball_cert.chi_max) + 1):
        assert _oracle_margin(p, P, xs, chi * nd, np.linspace(-nd, nd, 41)) < 0


def test_monotone_in_delta(ball, ball_lyap, ball_cert):
    U = certify._directions(0, 2, 64, rng.SPHERE, 99)
    d, chi = ball_cert.delta_star, ball_cert.chi_star
    assert sampled_condition(ball, ball_lyap, d, chi, U, 11, 0.1, ball_cert_cfg()) >= 0
    assert sampled_condition(ball, ball_lyap, d / 2, chi, U, 11, 0.1, ball_cert_cfg()) >= 0


def ball_cert_cfg():
    from deltacert.hybrid import IntegratorConfig
    return IntegratorConfig()


def test_reproducible(ball, ball_orbit, ball_lyap, ball_rho, ball_cert):
    again = test_delta(ball, ball_orbit, ball_lyap, CertifyConfig(), rho=ball_rho, threads=4)
    assert again.to_dict() == ball_cert.to_dict()


def test_seed_changes_samples_not_validity(ball, ball_orbit, ball_lyap, ball_rho):
    c = test_delta(ball, ball_orbit, ball_lyap, CertifyConfig(seed=7, chi_max=20), rho=ball_rho)
    assert c.certified and audit_certificate(ball, c) >= 0


def test_chi_max_zero(ball, ball_orbit, ball_lyap, ball_rho):
    c = test_delta(ball, ball_orbit, ball_lyap, CertifyConfig(chi_max=0), rho=ball_rho)
    assert c.delta_star == 0 and not c.trials and c.gamma is None and c.delta_max is None


@pytest.mark.parametrize("kw", [dict(d_step=0.0), dict(chi_step=-1.0), dict(chi_max=-1.0),
                                dict(n_samples=0), dict(n_d=0), dict(k=1.0)])
def test_degenerate_config(kw):
    with pytest.raises(DegenerateConfig):
        CertifyConfig(**kw)


def test_unstable_orbit_rejected(ball, ball_lyap):
    orbit = PeriodicOrbit(np.zeros(2), 1.0, np.diag([0.0, 1.2]), 1.2, 0.0)
    with pytest.raises(NotStable):
        test_delta(ball, orbit, ball_lyap, rho=1.0)


def test_non_robust_toy(fragile_tight):
    sys_, orbit, lc, rho = fragile_tight
    c = test_delta(sys_, orbit, lc, CertifyConfig(), rho=rho)
    assert c.delta_star == 0 and not c.certified


def test_strict_annulus_is_no_weaker(ball, ball_orbit, ball_lyap, ball_rho, ball_cert):
    c = test_delta(ball, ball_orbit, ball_lyap, CertifyConfig(strict_annulus=True), rho=ball_rho)
    assert 0 < c.delta_star <= ball_cert.delta_star


def test_certificate_dict_round_trip(ball_cert):
    again = certify.DeltaRobustnessCertificate.from_dict(ball_cert.to_dict())
    assert again == ball_cert


# --- ISS and invariance ----------------------------------------------------------

def test_iss_certified_ball(ball, ball_cert):
    rep = verify_iss_bound(ball, ball_cert, num_rollouts=200, K=50, seed=3)
    assert rep.ok and rep.worst_slack > 0


def test_iss_zero_disturbance_at_fixed_point(ball, ball_cert):
    rep = verify_iss_bound(ball, ball_cert, num_rollouts=5, K=20, delta=0.0)
    assert rep.ok and abs(rep.worst_slack) < 1e-8
    # d = 0 from x*: the bound's slack is gamma delta* at every step
    res = rollout(ball, np.array(ball_cert.x_star), DisturbanceSequence.zeros(20))
    dist = np.linalg.norm(res.states - ball_cert.x_star, axis=1)
    slack = ball_cert.gamma * ball_cert.delta_star - dist
    assert np.allclose(slack, ball_cert.gamma * ball_cert.delta_star, atol=1e-8)


def test_iss_over_claim_truncates():
    sys_, orbit, lc, rho = fragile(0.3)
    c = test_delta(sys_, orbit, lc, CertifyConfig(), rho=rho)
    rep = verify_iss_bound(sys_, c, num_rollouts=100, K=50, delta=0.06)
    assert rep.truncations > 0 and not rep.ok


def test_iss_rows(ball, ball_cert):
    rep = verify_iss_bound(ball, ball_cert, num_rollouts=3, K=4, keep_rows=True)
    assert len(rep.rows) == 12 and {r[1] for r in rep.rows} == {1, 2, 3, 4}


def test_invariance_ball(ball, ball_cert):
    rep = check_invariance(ball, ball_cert)
    assert rep.passed and rep.worst_excess <= 0


def test_invariance_trivial_at_zero(ball, ball_cert):
    assert check_invariance(ball, ball_cert, r_delta=0.0).passed


def test_invariance_inflated_fails():
    sys_, orbit, lc, rho = fragile(0.3)
    c = test_delta(sys_, orbit, lc, CertifyConfig(), rho=rho)
    assert check_invariance(sys_, c).passed
    assert not check_invariance(sys_, c, r_delta=10 * c.r_delta).passed


# --- barrier ---------------------------------------------------------------------

def test_barrier_confidence():
    assert barrier_confidence(0.05, 100) == pytest.approx(0.994079, abs=1e-6)
    assert barrier_confidence(0.05, 0) == 0.0


def test_barrier_rejects_bad_input(ball, ball_orbit):
    with pytest.raises(DegenerateConfig):
        barrier_verify_fixed_delta(ball, ball_orbit, 0.01, gamma_b=0.0)
    with pytest.raises(DegenerateConfig):
        barrier_verify_fixed_delta(ball, ball_orbit, 0.0)


def _deadbeat():
    sys_ = models.linear_return_model(np.zeros((1, 1)))
    orbit = PeriodicOrbit(np.zeros(2), 1.0, np.zeros((2, 2)), 0.0, 0.0)
    return sys_, orbit


def test_barrier_deadbeat_passes():
    sys_, orbit = _deadbeat()
    rep = barrier_verify_fixed_delta(sys_, orbit, 0.05, gamma_b=1.0, N=50)
    assert rep.verdict and rep.worst_margin == 1.0
    assert rep.d_plus == pytest.approx(0.05) and rep.d_minus == pytest.approx(-0.05)


def test_barrier_center_sample():
    # at x = x* the condition reads min_d H(P_d(x*)) >= (1 - gamma_b) delta^2
    sys_, orbit = _deadbeat()
    delta, gb = 0.05, 0.5
    Y, _, _ = poincare_batch(sys_, np.zeros((11, 2)), d_grid(delta, 11))
    H = delta ** 2 - np.sum(Y ** 2, axis=1)
    assert H.min() == pytest.approx(0.0, abs=1e-15)
    assert H.min() < (1 - gb) * delta ** 2
    assert not barrier_verify_fixed_delta(sys_, orbit, delta, gamma_b=gb, N=20).verdict


def test_barrier_containment_consistency():
    # a passing sample maps into the delta-ball for every grid level
    sys_, orbit = _deadbeat()
    delta = 0.05
    rep = barrier_verify_fixed_delta(sys_, orbit, delta, gamma_b=1.0, N=50, seed=4)
    assert rep.verdict
    Z = np.stack([sample_ball(2, delta, rng.stream(4, rng.BARRIER, i)) for i in range(50)])
    ds = d_grid(delta, 11)
    Y, _, st = poincare_batch(sys_, np.repeat(Z, ds.size, axis=0), np.tile(ds, 50))
    assert np.all(np.linalg.norm(Y, axis=1) <= delta * (1 + 1e-12))


def test_barrier_max_collapsed_range():
    sys_, orbit = _deadbeat()
    res = barrier_max_delta(sys_, orbit, 0.02, N_outer=3, N_inner=20, gamma_b=1.0, delta_lo=0.02)
    assert res.delta_star == 0.02 and not res.empty and res.accepted == [0.02] * 3
    assert res.confidence == pytest.approx(barrier_confidence(0.05, 3))


def test_barrier_max_non_robust(fragile_tight):
    sys_, orbit, _, _ = fragile_tight
    res = barrier_max_delta(sys_, orbit, 0.05, N_outer=10, N_inner=20)
    assert res.empty and res.delta_star == 0.0 and len(res.reports) == 10


@pytest.mark.xfail(strict=True, reason="samples at d = +-delta land on the ball's boundary, so H = 0 "
                                         "there while (1 - gamma_b) H(x) > 0 inside; see notes")
def test_barrier_ball_certified_delta(ball, ball_orbit, ball_cert):
    rep = barrier_verify_fixed_delta(ball, ball_orbit, ball_cert.delta_star, gamma_b=0.5, N=200)
    assert rep.verdict


@pytest.mark.xfail(strict=True, reason="follows from the fixed-delta failure on the ball")
def test_barrier_ball_max_delta(ball, ball_orbit, ball_cert):
    res = barrier_max_delta(ball, ball_orbit, 0.05, N_outer=20, N_inner=50)
    assert not res.empty and abs(res.delta_star - ball_cert.delta_star) <= 0.01
