"""Probabilistic barrier check on two models.

On the deadbeat linear model (every return lands on (d, 0)) the check passes
with gamma_b = 1. On the bouncing ball it fails for every delta: the grid
levels d = +-delta put the image's height coordinate exactly on the delta
sphere, so H(P_d(x)) <= 0 there while interior samples need a positive value.
"""
import argparse

import numpy as np

from deltacert import certify, models, poincare


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=100)
    ap.add_argument("--eps", type=float, default=0.05)
    args = ap.parse_args()

    dead = models.linear_return_model(np.zeros((1, 1)))
    orbit = poincare.PeriodicOrbit(np.zeros(2), 1.0, np.zeros((2, 2)), 0.0, 0.0)
    for gb in (1.0, 0.5):
        rep = certify.barrier_verify_fixed_delta(dead, orbit, 0.05, gamma_b=gb, N=args.N, eps=args.eps)
        print(f"deadbeat, delta 0.05, gamma_b {gb}: verdict {'pass' if rep.verdict else 'fail'}, "
              f"pass fraction {rep.pass_fraction:.2f}, confidence {rep.confidence:.6f}")

    ball = models.bouncing_ball()
    orbit = poincare.find_fixed_point(ball, [0.0, -4.0])
    for delta in (0.001, 0.006, 0.03):
        rep = certify.barrier_verify_fixed_delta(ball, orbit, delta, N=args.N, eps=args.eps)
        print(f"ball, delta {delta}: verdict {'pass' if rep.verdict else 'fail'}, "
              f"pass fraction {rep.pass_fraction:.2f}, worst value {rep.worst_value:.3e}")
    res = certify.barrier_max_delta(ball, orbit, 0.05, N_outer=20, N_inner=50, eps=args.eps)
    print(f"ball max-delta: delta*_N = {res.delta_star:g}, empty = {res.empty}, confidence {res.confidence:.6f}")


if __name__ == "__main__":
    main()
