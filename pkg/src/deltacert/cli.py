"""``deltacert`` command-line interface.

Exit codes: 0 ok, 2 no orbit, 3 not certified / failed verdict,
4 soundness violation, 64 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as _config
from .certify import (
    DeltaRobustnessCertificate,
    barrier_max_delta,
    barrier_verify_fixed_delta,
    check_invariance,
    test_delta,
    verify_iss_bound,
)
from .errors import ConfigError, DeltaCertError, DomainEscape, NoConvergence, NotStable
from .hybrid import Status, flow, reset_batch
from .lyapunov import build_certificate
from .models import build_model
from .poincare import DisturbanceSequence, find_fixed_point, probe_domain_radius
from .serialize import write_csv, write_json

EXIT_OK, EXIT_NO_ORBIT, EXIT_NOT_CERTIFIED, EXIT_VIOLATION, EXIT_USAGE = 0, 2, 3, 4, 64

CERT_SCHEMA = "deltacert.certificate/1"
ORBIT_SCHEMA = "deltacert.orbit/1"
ISS_SCHEMA = "deltacert.iss-report/1"
BARRIER_SCHEMA = "deltacert.barrier-report/1"
SIM_SCHEMA = "deltacert.simulation/1"

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _param(text):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError("expected KEY=VAL")
    try:
        value = json.loads(val)
    except json.JSONDecodeError:
        value = val
    return key, value


def _u64(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an unsigned 64-bit integer")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("expected an unsigned 64-bit integer")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a non-negative integer")
    if v < 0:
        raise argparse.ArgumentTypeError("expected a non-negative integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--model", help="model name (overrides config)")
    common.add_argument("--param", metavar="KEY=VAL", type=_param, action="append", default=[],
                        help="model parameter override (repeatable)")
    common.add_argument("--set", metavar="SECTION.KEY=VAL", type=_param, action="append", default=[],
                        dest="overrides", help="any config override, e.g. rollout.K=0 (repeatable)")
    common.add_argument("--seed", type=_u64, help="root random seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=_nonneg_int, default=1, help="worker threads (0 = auto)")
    common.add_argument("--strict-annulus", action="store_true",
                        help="also sample the annulus [r1, r2] in each certification trial")

    p = _Parser(prog="deltacert", description="Delta-robustness certification of hybrid periodic orbits.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("find-orbit", parents=[common], help="locate the periodic orbit")
    sub.add_parser("certify", parents=[common], help="run the sampled certification search")
    s = sub.add_parser("verify-iss", parents=[common], help="check the ISS bound by rollouts")
    s.add_argument("--certificate", required=True, metavar="PATH")
    s.add_argument("--delta", type=float, help="override the certified delta")
    s = sub.add_parser("barrier", parents=[common], help="probabilistic barrier verification")
    s.add_argument("--mode", choices=("fixed", "max"))
    s.add_argument("--delta", type=float, help="delta for fixed mode")
    s.add_argument("--certificate", metavar="PATH", help="take delta from this certificate")
    sub.add_parser("simulate", parents=[common], help="roll out the disturbed return map")
    return p


def resolve_config(args):
    """Config file (or defaults) with command-line overrides applied."""
    if args.config:
        if not os.path.isfile(args.config):
            raise UsageError(f"config file not found: {args.config}")
        base = _config.load(args.config)
    else:
        base = _config.RunConfig()
    doc = json.loads(json.dumps(base.to_dict()))
    if args.model:
        if args.model != doc["model"]["name"]:
            doc["model"]["params"] = {}
        doc["model"]["name"] = args.model
    for key, value in args.param:
        doc["model"]["params"][key] = value
    for key, value in args.overrides:
        section, dot, name = key.partition(".")
        if not dot:
            raise UsageError(f"--set expects SECTION.KEY=VAL, got {key!r}")
        doc.setdefault(section, {})[name] = value
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out:
        doc["out"] = args.out
    if args.strict_annulus:
        doc["certify"]["strict_annulus"] = True
    if getattr(args, "mode", None):
        doc["barrier"]["mode"] = args.mode
    return _config.from_dict(doc)


def _setup(cfg):
    try:
        built = build_model(cfg.model.name, cfg.model.params)
    except (TypeError, ValueError, OSError) as exc:
        raise UsageError(f"bad model parameters: {exc}") from exc
    os.makedirs(cfg.out, exist_ok=True)
    # echo every default, model parameters included, so the file alone reproduces the run
    resolved = replace(cfg, model=replace(cfg.model, params=dict(built[0].params)))
    write_json(os.path.join(cfg.out, "config.resolved.json"), resolved.to_dict())
    return built


def _orbit(sys_, guess, cfg, threads):
    return find_fixed_point(sys_, guess, cfg.integrator, threads=threads)


def _orbit_doc(sys_, orbit):
    eig = orbit.eigenvalues
    return {
        "schema": ORBIT_SCHEMA,
        "model": sys_.name,
        "model_params": sys_.params,
        "state_names": list(sys_.state_names),
        "state_units": list(sys_.state_units),
        "x_star": orbit.x_star,
        "period": orbit.period,
        "A": orbit.A,
        "eigenvalues_re": eig.real,
        "eigenvalues_im": eig.imag,
        "eigenvalue_magnitudes": np.abs(eig),
        "spectral_radius": orbit.spectral_radius,
        "stable": bool(orbit.stable),
        "residual": orbit.residual,
        "newton_iterations": orbit.iterations,
    }


def cmd_find_orbit(cfg, args):
    sys_, guess = _setup(cfg)
    try:
        orbit = _orbit(sys_, guess, cfg, args.threads)
    except NoConvergence as exc:
        print(f"no periodic orbit: {exc}", file=sys.stderr)
        return EXIT_NO_ORBIT
    write_json(os.path.join(cfg.out, "orbit.json"), _orbit_doc(sys_, orbit))
    print(f"x* = {np.array2string(orbit.x_star, precision=10)}  T = {orbit.period:.10g} s  "
          f"rho_spec = {orbit.spectral_radius:.6g}")
    return EXIT_OK


def certificate_doc(sys_, dcert, inv):
    doc = {"schema": CERT_SCHEMA, "model_params": sys_.params}
    doc.update(dcert.to_dict())
    doc["invariance"] = {"passed": inv.passed, "worst_excess": inv.worst_excess,
                         "n_boundary": inv.n_boundary}
    return doc


def load_certificate(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read certificate: {exc}") from exc
    if doc.get("schema") != CERT_SCHEMA:
        raise UsageError("not a deltacert certificate")
    body = {k: v for k, v in doc.items() if k not in ("schema", "model_params", "invariance")}
    for t in body.get("trials", []):
        if t["worst_margin"] is None:
            t["worst_margin"] = float("-inf")
    return DeltaRobustnessCertificate.from_dict(body)


def cmd_certify(cfg, args):
    sys_, guess = _setup(cfg)
    try:
        orbit = _orbit(sys_, guess, cfg, args.threads)
    except NoConvergence as exc:
        print(f"no periodic orbit: {exc}", file=sys.stderr)
        return EXIT_NO_ORBIT
    if not orbit.stable:
        print(f"orbit not stable (rho_spec = {orbit.spectral_radius:.6g})", file=sys.stderr)
        return EXIT_NOT_CERTIFIED
    lc = build_certificate(orbit, scale=sys_.scale, k=cfg.certify.k)
    rho = probe_domain_radius(sys_, orbit.x_star, cfg.integrator, seed=cfg.seed, threads=args.threads)
    dcert = test_delta(sys_, orbit, lc, cfg.certify, rho=rho, cfg=cfg.integrator, threads=args.threads)
    inv = check_invariance(sys_, dcert, seed=cfg.seed, cfg=cfg.integrator, threads=args.threads)
    write_json(os.path.join(cfg.out, "certificate.json"), certificate_doc(sys_, dcert, inv))
    write_csv(os.path.join(cfg.out, "trace.csv"), ("delta", "chi", "worst_margin", "pass"),
              ((t.delta, t.chi, t.worst_margin, t.passed) for t in dcert.trials))
    print(f"delta* = {dcert.delta_star:.6g}  chi* = {dcert.chi_star:.6g}  "
          f"rho (estimated) = {rho:.6g}  invariance {'pass' if inv.passed else 'FAIL'}")
    return EXIT_OK if dcert.certified else EXIT_NOT_CERTIFIED


def _check_model(sys_, dcert):
    if dcert.model != sys_.name:
        raise UsageError(f"certificate is for {dcert.model!r}, config selects {sys_.name!r}")


def cmd_verify_iss(cfg, args):
    sys_, _ = _setup(cfg)
    dcert = load_certificate(args.certificate)
    _check_model(sys_, dcert)
    rep = verify_iss_bound(sys_, dcert, cfg.rollout.num_rollouts, cfg.rollout.K, seed=cfg.seed,
                           delta=args.delta, cfg=cfg.integrator, threads=args.threads, keep_rows=True)
    doc = {"schema": ISS_SCHEMA, "model": sys_.name}
    doc.update(rep.summary())
    doc["ok"] = rep.ok
    write_json(os.path.join(cfg.out, "iss_report.json"), doc)
    write_csv(os.path.join(cfg.out, "iss_rollouts.csv"),
              ("rollout_id", "k", "dist_to_xstar", "bound_value", "violated"), rep.rows)
    print(f"{rep.num_rollouts} rollouts x {rep.K} steps at delta = {rep.delta:.6g}: "
          f"{rep.violations} violations, {rep.truncations} truncations")
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def cmd_barrier(cfg, args):
    sys_, guess = _setup(cfg)
    b = cfg.barrier
    try:
        orbit = _orbit(sys_, guess, cfg, args.threads)
    except NoConvergence as exc:
        print(f"no periodic orbit: {exc}", file=sys.stderr)
        return EXIT_NO_ORBIT
    path = os.path.join(cfg.out, "barrier_report.json")
    if b.mode == "fixed":
        delta = args.delta if args.delta is not None else b.delta
        if args.certificate and args.delta is None:
            dcert = load_certificate(args.certificate)
            _check_model(sys_, dcert)
            delta = dcert.delta_star
        if not delta > 0:
            raise UsageError("fixed mode needs delta > 0 (--delta, barrier.delta or --certificate)")
        rep = barrier_verify_fixed_delta(sys_, orbit, delta, b.gamma_b, b.N, b.eps, b.n_d,
                                         seed=cfg.seed, cfg=cfg.integrator, threads=args.threads)
        doc = {"schema": BARRIER_SCHEMA, "model": sys_.name, "mode": "fixed"}
        doc.update(rep.to_dict())
        write_json(path, doc)
        print(f"delta = {rep.delta:.6g}: verdict {'pass' if rep.verdict else 'FAIL'} "
              f"(r*_N = {rep.worst_margin:g}, pass fraction {rep.pass_fraction:.3g}); "
              f"confidence 1-(1-eps)^N = {rep.confidence:.6f}")
        return EXIT_OK if rep.verdict else EXIT_NOT_CERTIFIED
    lo, hi = b.delta_range
    res = barrier_max_delta(sys_, orbit, hi, b.N_outer, b.N, b.eps, b.gamma_b, b.n_d, seed=cfg.seed,
                            delta_lo=lo, cfg=cfg.integrator, threads=args.threads)
    doc = {"schema": BARRIER_SCHEMA, "model": sys_.name, "mode": "max"}
    doc.update(res.to_dict())
    write_json(path, doc)
    flag = " (no sampled delta passed)" if res.empty else ""
    print(f"delta*_N = {res.delta_star:.6g}{flag}; confidence 1-(1-eps)^N = {res.confidence:.6f}")
    return EXIT_NOT_CERTIFIED if res.empty else EXIT_OK


def cmd_simulate(cfg, args):
    sys_, guess = _setup(cfg)
    s = cfg.simulate
    try:
        orbit = _orbit(sys_, guess, cfg, args.threads)
    except NoConvergence as exc:
        print(f"no periodic orbit: {exc}", file=sys.stderr)
        return EXIT_NO_ORBIT
    x = np.array(s.x0, dtype=float) if s.x0 else orbit.x_star.copy()
    if x.size != sys_.dimension:
        raise UsageError(f"simulate.x0 needs {sys_.dimension} entries")
    if s.delta > 0:
        ds = DisturbanceSequence.uniform(s.steps, s.delta, cfg.seed)
    else:
        ds = DisturbanceSequence.zeros(s.steps)
    names = list(sys_.state_names)
    steps, traj = [(0, 0.0, *x)], []
    t0 = 0.0
    truncated_at, reason = None, None
    for k, d in enumerate(ds.values):
        xp, ok = reset_batch(sys_, x)
        if not ok[0]:
            truncated_at, reason = k, Status.RESET_DOMAIN.name
            break
        try:
            tr = flow(sys_, xp[0], cfg.integrator.horizon, cfg.integrator, level=d)
        except DeltaCertError as exc:
            truncated_at, reason = k, type(exc).__name__
            break
        if tr.event is None:
            truncated_at, reason = k, Status.NO_IMPACT.name
            break
        h = sys_.guard(tr.x)
        traj.extend((t0 + t, k, *xi, hi) for t, xi, hi in zip(tr.t, tr.x, h))
        t0 += tr.t[-1]
        x = tr.x[-1]
        steps.append((k + 1, float(d), *x))
    write_csv(os.path.join(cfg.out, "trajectory.csv"), ("t", "step", *names, "h"), traj)
    write_csv(os.path.join(cfg.out, "steps.csv"), ("k", "d_k", *names), steps)
    dev = [float(np.linalg.norm((np.array(r[2:]) - orbit.x_star) / np.array(sys_.scale))) for r in steps]
    write_json(os.path.join(cfg.out, "simulation.json"), {
        "schema": SIM_SCHEMA, "model": sys_.name, "steps_requested": s.steps,
        "steps_completed": len(steps) - 1, "truncated_at": truncated_at, "reason": reason,
        "x_star": orbit.x_star, "max_deviation": max(dev), "final_deviation": dev[-1]})
    msg = f"{len(steps) - 1} steps, max |x_k - x*| = {max(dev):.3g}"
    if truncated_at is not None:
        msg += f"; left the map's domain at step {truncated_at} ({reason})"
    print(msg)
    return EXIT_OK


COMMANDS = {
    "find-orbit": cmd_find_orbit,
    "certify": cmd_certify,
    "verify-iss": cmd_verify_iss,
    "barrier": cmd_barrier,
    "simulate": cmd_simulate,
}


def main(argv=None):
    level = os.environ.get("DELTACERT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"deltacert: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotStable as exc:
        print(f"not certified: {exc}", file=sys.stderr)
        return EXIT_NOT_CERTIFIED
    except DomainEscape as exc:
        print(f"no periodic orbit: {exc}", file=sys.stderr)
        return EXIT_NO_ORBIT


if __name__ == "__main__":
    raise SystemExit(main())
