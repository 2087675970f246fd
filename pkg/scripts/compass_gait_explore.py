"""Why the compass gait certifies delta* = 0 at the default settings.

Near x* the return map is P_d(x* + z) ~ x* + A z + B d. Substituting into the
decrease condition gives (1 - k)|z|^2 >= 2 |d| |A^T P B| |z| + d^2 B^T P B,
so chi must exceed a threshold fixed by A, B and P alone. The script prints
that threshold for a few state scalings and then samples the full nonlinear
condition over (delta, chi) so the point where curvature takes over is visible.
"""
import argparse
import dataclasses

import numpy as np

from deltacert import certify, lyapunov, models, poincare
from deltacert.hybrid import IntegratorConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--k", type=float, default=0.1)
    args = ap.parse_args()

    base, guess = models.build_model("compass-gait")
    orbit = poincare.find_fixed_point(base, guess, threads=args.threads)
    x = orbit.x_star
    h = 1e-6
    B = (poincare.poincare_extended(base, x, h) - poincare.poincare_extended(base, x, -h)) / (2 * h)
    print(f"x* = {np.round(x, 6)}, |lambda| = {np.round(np.abs(orbit.eigenvalues), 4)}")
    print(f"dP/dd at x* = {np.round(B, 4)}\n")

    print(f"{'scale':>22} {'M':>7} {'|A^T P B|':>10} {'B^T P B':>10} {'chi needed':>11}")
    for scale in [(1, 1, 1, 1), (0.1, 0.1, 1, 1), (1, 1, 10, 10), (0.2, 0.2, 1, 3)]:
        s = np.array(scale, dtype=float)
        lc = lyapunov.build_certificate(orbit, scale=s, k=args.k)
        Bz = B / s
        a = np.linalg.norm(lc.A_scaled.T @ lc.P @ Bz)
        b = Bz @ lc.P @ Bz
        chi = (a + np.sqrt(a * a + (1 - args.k) * b)) / (1 - args.k)
        print(f"{str(scale):>22} {np.sqrt(lc.k2 / lc.k1):7.2f} {a:10.1f} {b:10.1f} {chi:11.1f}")

    sys_ = dataclasses.replace(base, scale=(1.0, 1.0, 10.0, 10.0))
    lc = lyapunov.build_certificate(orbit, scale=np.array(sys_.scale), k=args.k)
    U = certify._directions(0, 4, 64, 0, 1)
    print("\nsampled worst margin, scale (1, 1, 10, 10); positive means the trial passes")
    print(f"{'chi':>5} {'delta':>8} {'margin':>11} {'(1-k)|z|^2':>11}")
    for chi in (100, 400, 600):
        for delta in (1e-8, 5e-8, 2e-7, 2e-5):
            m = certify.sampled_condition(sys_, lc, delta, chi, U, 11, args.k, IntegratorConfig(),
                                          threads=args.threads)
            print(f"{chi:5d} {delta:8.0e} {m:11.3e} {(1 - args.k) * (chi * delta) ** 2:11.3e}")


if __name__ == "__main__":
    main()
