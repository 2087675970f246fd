"""Roll out the disturbed return map inside and beyond the certified delta.

At the certified delta the ISS bound holds on every step. Claiming ten times
more on the fragile ball pushes rollouts off the reset's domain, and the
script reports when each one left.
"""
import argparse

import numpy as np

from deltacert import certify, lyapunov, models, poincare


def certified(name, params):
    sys_, guess = models.build_model(name, params)
    orbit = poincare.find_fixed_point(sys_, guess)
    lc = lyapunov.build_certificate(orbit)
    rho = poincare.probe_domain_radius(sys_, orbit.x_star)
    return sys_, orbit, certify.test_delta(sys_, orbit, lc, certify.CertifyConfig(), rho=rho)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rollouts", type=int, default=200)
    ap.add_argument("--K", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for name, params in [("bouncing-ball", {}), ("fragile-ball", {"band": 0.3})]:
        sys_, orbit, c = certified(name, params)
        print(f"{name} {params}: delta* = {c.delta_star:g}, chi* = {c.chi_star:g}")
        for factor in (1, 10):
            rep = certify.verify_iss_bound(sys_, c, args.rollouts, args.K, seed=args.seed,
                                           delta=factor * c.delta_star)
            print(f"  delta = {factor:2d} x delta*: {rep.violations} violations, "
                  f"{rep.truncations}/{args.rollouts} truncated, worst slack {rep.worst_slack:.3e}")

    sys_, orbit, c = certified("fragile-ball", {"band": 0.1})
    print(f"fragile ball (band 0.1, delta* = {c.delta_star:g}): steps from x* until the reset fails")
    for delta in (0.02, 0.05, 0.1):
        steps = []
        for seed in range(args.seed, args.seed + 5):
            ds = poincare.DisturbanceSequence.uniform(200, delta, seed=seed)
            res = poincare.rollout(sys_, orbit.x_star, ds)
            steps.append(str(res.truncated_at) if res.truncated else ">200")
        print(f"  delta = {delta:g}: {', '.join(steps)}")

if __name__ == "__main__":
    main()
