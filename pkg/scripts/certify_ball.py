"""Certify the actuated bouncing ball end to end and check the result.

    python3 scripts/certify_ball.py [--seed N] [--threads N]
"""
import argparse
import time

from deltacert import certify, lyapunov, models, poincare


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--strict-annulus", action="store_true")
    args = ap.parse_args()

    t0 = time.perf_counter()
    sys_ = models.bouncing_ball()
    orbit = poincare.find_fixed_point(sys_, [0.0, -4.0])
    print(f"x* = {orbit.x_star}, T = {orbit.period:.9f} s, spectral radius {orbit.spectral_radius:.6f}")
    lc = lyapunov.build_certificate(orbit)
    rho = poincare.probe_domain_radius(sys_, orbit.x_star, seed=args.seed, threads=args.threads)
    cfg = certify.CertifyConfig(seed=args.seed, strict_annulus=args.strict_annulus)
    c = certify.test_delta(sys_, orbit, lc, cfg, rho=rho, threads=args.threads)
    print(f"delta* = {c.delta_star:g} m, chi* = {c.chi_star:g} after {len(c.trials)} trials")
    if not c.certified:
        return
    print(f"M = {c.M:.4f}  alpha = {c.alpha:.5f}  gamma = {c.gamma:.3f}  r(delta) = {c.r_delta:.4g}  "
          f"delta_max = {c.delta_max:.4g} (rho estimated {rho:.4g})")
    print(f"10x audit worst margin: {certify.audit_certificate(sys_, c, threads=args.threads):.3e}")
    inv = certify.check_invariance(sys_, c, threads=args.threads)
    print(f"invariance: {'pass' if inv.passed else 'FAIL'} (worst excess {inv.worst_excess:.3e})")
    rep = certify.verify_iss_bound(sys_, c, 1000, 50, seed=args.seed, threads=args.threads)
    print(f"ISS: {rep.violations} violations, {rep.truncations} truncations, worst slack {rep.worst_slack:.3e}")
    print(f"total {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
