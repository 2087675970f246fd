import numpy as np
import pytest
from hypothesis import given, strategies as st

from deltacert import models
from deltacert.errors import BadConstants, NotStable
from deltacert.lyapunov import (
    RobustLyapunovCertificate, build_certificate, decrease_margin, decrease_margin_batch, lyap_value,
    lyapunov_residual, solve_discrete_lyapunov,
)
from deltacert.poincare import PeriodicOrbit


def _stable(seed, n=4):
    g = np.random.default_rng(seed)
    A = g.standard_normal((n, n))
    return A * g.uniform(0.1, 0.95) / np.max(np.abs(np.linalg.eigvals(A)))


def test_scalar():
    assert solve_discrete_lyapunov([[0.8]], [[1.0]])[0, 0] == pytest.approx(1 / 0.36, rel=1e-14)


def test_zero_matrix():
    assert np.array_equal(solve_discrete_lyapunov(np.zeros((3, 3)), np.eye(3)), np.eye(3))


def test_scaled_rotation():
    c, s = np.cos(0.7), np.sin(0.7)
    P = solve_discrete_lyapunov(0.5 * np.array([[c, -s], [s, c]]))
    assert np.allclose(P, np.eye(2) / 0.75, atol=1e-14)


def test_unstable_rejected():
    with pytest.raises(NotStable):
        solve_discrete_lyapunov([[1.0, 0.0], [0.0, 0.5]])


@given(st.integers(0, 100_000))
def test_residual_and_symmetry(seed):
    A = _stable(seed)
    Q = np.eye(4)
    P = solve_discrete_lyapunov(A, Q)
    assert np.linalg.norm(lyapunov_residual(A, P, Q)) <= 1e-10 * np.linalg.norm(Q)
    assert np.array_equal(P, P.T)


@given(st.integers(0, 100_000))
def test_decrease_identity_on_linearization(seed):
    A = _stable(seed)
    P = solve_discrete_lyapunov(A)
    x = np.random.default_rng(seed + 1).standard_normal(4)
    lhs = (A @ x) @ P @ (A @ x) - x @ P @ x
    assert lhs == pytest.approx(-(x @ x), abs=1e-12 * max(1.0, np.abs(P).max()) * (x @ x))


def _scalar_cert():
    p = 1 / 0.36
    return RobustLyapunovCertificate(P=np.array([[p]]), Q=np.eye(1), k1=p, k2=p, k3=1.0,
                                     x_star=np.zeros(1), scale=np.ones(1), chi=3.0)


def test_lyap_value_examples():
    c = _scalar_cert()
    assert lyap_value(c, [0.0]) == 0.0
    assert lyap_value(c, [0.1]) == pytest.approx(0.0277778, abs=1e-7)


def test_rayleigh_bounds(ball_lyap):
    Z = np.random.default_rng(4).standard_normal((1000, 2))
    V = lyap_value(ball_lyap, ball_lyap.x_star + Z)
    r2 = np.sum(Z * Z, axis=1)
    assert np.all(ball_lyap.k1 * r2 <= V * (1 + 1e-12))
    assert np.all(V <= ball_lyap.k2 * r2 * (1 + 1e-12))


def test_rayleigh_bounds_compass_gait(cg_model, cg_orbit):
    lc = build_certificate(cg_orbit, scale=cg_model[0].scale)
    Z = np.random.default_rng(5).standard_normal((1000, 4))
    V = lyap_value(lc, lc.x_star + Z)
    r2 = np.sum(Z * Z, axis=1)
    assert np.all(lc.k1 * r2 <= V * (1 + 1e-10)) and np.all(V <= lc.k2 * r2 * (1 + 1e-10))
    assert np.linalg.norm(lyapunov_residual(lc.A_scaled, lc.P, lc.Q)) <= 1e-10


@given(st.floats(0.01, 0.99), st.floats(0.1, 100.0))
def test_remark_round_trip(k3_frac, chi):
    c = RobustLyapunovCertificate(P=np.eye(2) * 3, Q=np.eye(2), k1=1.0, k2=3.0, k3=3.0 * k3_frac,
                                  x_star=np.zeros(2), scale=np.ones(2), chi=chi)
    assert c.k4 / 2 == pytest.approx(c.k3, rel=1e-14)
    assert c.chi_from_sigma() == pytest.approx(chi, rel=1e-14)


def test_certificate_constant_checks():
    with pytest.raises(BadConstants):
        RobustLyapunovCertificate(P=np.eye(1), Q=np.eye(1), k1=1.0, k2=1.0, k3=1.0,
                                  x_star=np.zeros(1), scale=np.ones(1))


def test_decrease_margin_at_fixed_point(ball, ball_orbit, ball_lyap):
    assert decrease_margin(ball, ball_lyap, ball_orbit.x_star, 0.0) == pytest.approx(0.0, abs=1e-8)


def test_decrease_margin_ball_example(ball, ball_orbit, ball_lyap):
    # velocity deviation contracts by e = 0.8 at d = 0; y stays on the guard
    x = ball_orbit.x_star + [0.0, 0.5]
    p = ball_lyap.P[1, 1]
    expected = -(p * 0.4 ** 2 - p * 0.25) - 0.1 * 0.25
    assert p == pytest.approx(1 / 0.36, rel=1e-9)
    assert decrease_margin(ball, ball_lyap, x, 0.0, k=0.1) == pytest.approx(expected, abs=1e-7)
    assert expected == pytest.approx(0.225, rel=1e-8)


@given(st.integers(0, 10_000))
def test_decrease_margin_linear_model(seed):
    M = np.array([[0.5, 0.2], [-0.1, 0.3]])
    sys_ = models.linear_return_model(M)
    A = np.zeros((3, 3))
    A[1:, 1:] = M
    orbit = PeriodicOrbit(np.zeros(3), 1.0, A, 0.5, 0.0)
    lc = build_certificate(orbit, k=0.1)
    z = np.random.default_rng(seed).standard_normal(3)
    z[0] = 0.0  # start on the guard
    assert decrease_margin(sys_, lc, z, 0.0, k=0.1) == pytest.approx(0.9 * (z @ z), rel=1e-9)


def test_decrease_margin_domain_escape(ball_lyap):
    sys_ = models.fragile_ball(band=1e-3)
    m = decrease_margin_batch(sys_, ball_lyap, np.array([[0.0, -4.0], [0.0, -5.0]]), 0.0)
    assert m[0] == -np.inf and np.isfinite(m[1])
