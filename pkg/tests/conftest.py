import pytest
from hypothesis import HealthCheck, settings

from deltacert import certify, lyapunov, models, poincare

settings.register_profile(
    "deltacert", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("deltacert")

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ball():
    return models.bouncing_ball()


@pytest.fixture(scope="session")
def ball_orbit(ball):
    return poincare.find_fixed_point(ball, [0.0, -4.0])


@pytest.fixture(scope="session")
def ball_lyap(ball_orbit):
    return lyapunov.build_certificate(ball_orbit)


@pytest.fixture(scope="session")
def ball_rho(ball, ball_orbit):
    return poincare.probe_domain_radius(ball, ball_orbit.x_star)


@pytest.fixture(scope="session")
def ball_cert(ball, ball_orbit, ball_lyap, ball_rho):
    return certify.test_delta(ball, ball_orbit, ball_lyap, certify.CertifyConfig(), rho=ball_rho)


@pytest.fixture(scope="session")
def cg_model():
    sys_, guess = models.build_model("compass-gait")
    return sys_, guess


@pytest.fixture(scope="session")
def cg_orbit(cg_model):
    sys_, guess = cg_model
    return poincare.find_fixed_point(sys_, guess)


@pytest.fixture(scope="session")
def cg_params():
    return models.CompassGaitParams()


def fragile(band):
    sys_, guess = models.build_model("fragile-ball", {"band": band})
    orbit = poincare.find_fixed_point(sys_, guess)
    lc = lyapunov.build_certificate(orbit)
    rho = poincare.probe_domain_radius(sys_, orbit.x_star)
    return sys_, orbit, lc, rho


@pytest.fixture(scope="session")
def fragile_tight():
    return fragile(1e-3)
