"""Delta-robustness certification of periodic orbits of hybrid systems."""
from .errors import *  # noqa: F401,F403
from .hybrid import (HybridSystemModel, IntegratorConfig, Status, Trajectory, apply_reset,  # noqa: F401
                     flow, guard_rate, time_to_impact)
from .poincare import (DisturbanceSequence, PeriodicOrbit, find_fixed_point, linearize,  # noqa: F401
                       poincare_extended, probe_domain_radius, rollout, rollout_batch,
                       spectral_radius)
from .lyapunov import (RobustLyapunovCertificate, build_certificate, decrease_margin,  # noqa: F401
                       lyap_value, solve_discrete_lyapunov, symmetric_eig_bounds)
from .certify import (BarrierVerificationReport, CertifyConfig, DeltaRobustnessCertificate,  # noqa: F401
                      barrier_max_delta, barrier_verify_fixed_delta, check_invariance,
                      sample_ball, sample_sphere, theorem_constants, verify_iss_bound)
from .certify import test_delta  # noqa: F401
from .models import (BouncingBallParams, CompassGaitParams, bouncing_ball, build_model,  # noqa: F401
                     compass_gait, fragile_ball, rigid_impact)

__version__ = "0.1.0"
