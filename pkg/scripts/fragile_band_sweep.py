"""Same eigenvalues, different robustness: sweep the fragile ball's reset band.

Prints the spectral radius, the probed domain radius and the certified delta*
for each band. The spectrum never changes; delta* collapses as the band shrinks.
"""
import argparse

from deltacert import certify, lyapunov, models, poincare


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bands", type=float, nargs="+", default=[10.0, 0.3, 0.1, 0.05, 0.03, 0.01, 1e-3])
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    print(f"{'band':>8} {'rho_spec':>9} {'rho_est':>9} {'delta*':>8} {'chi*':>5}")
    for band in args.bands:
        sys_, guess = models.build_model("fragile-ball", {"band": band})
        orbit = poincare.find_fixed_point(sys_, guess)
        lc = lyapunov.build_certificate(orbit)
        rho = poincare.probe_domain_radius(sys_, orbit.x_star, threads=args.threads)
        c = certify.test_delta(sys_, orbit, lc, certify.CertifyConfig(), rho=rho, threads=args.threads)
        print(f"{band:8g} {orbit.spectral_radius:9.6f} {rho:9.4g} {c.delta_star:8g} {c.chi_star:5g}")


if __name__ == "__main__":
    main()
