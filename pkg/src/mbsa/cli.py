"""mbsa command line.

Exit codes: 0 success, 1 solver or model failure, 2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import scenario
from .beam import BeamModel
from .demo import gradient_descent, run_demo, write_gd_csv
from .harness import PhaseError
from .magnetic import CalibrationError, calibrate, read_calibration_csv
from .solver import CONVERGED, ConfigurationError, ModelDomainError, write_trace_csv

log = logging.getLogger("mbsa")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise scenario.ScenarioError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    return out


def cmd_demo1d(args):
    out = _out_dir(args.out)
    beta = 0.5 if args.beta is None else args.beta
    max_iter = 200 if args.max_iter is None else args.max_iter
    if beta <= 0:
        raise ConfigurationError("beta must be positive")
    if beta >= 2:
        log.warning("beta=%g is outside the stable range (0, 2)", beta)
    t0 = time.perf_counter()
    trace = run_demo(beta, max_iter)
    gd = gradient_descent(args.x0, args.gd_step)
    log.info("demo: %.2f ms", 1e3 * (time.perf_counter() - t0))
    scenario.atomic_write(out / "mbsa_trace.csv", lambda tmp: write_trace_csv(trace, tmp))
    scenario.atomic_write(out / "gd_trace.csv", lambda tmp: write_gd_csv(gd, tmp))
    x = float(trace.final_g[0])
    summary = {"beta": beta, "status": trace.status, "iterations": len(trace), "x": x,
               "f": float(np.sin(15 * x) + 8 * x + 3), "gd_x": float(gd.x[-1]), "gd_f": float(gd.fx[-1]),
               "gd_steps": int(len(gd.x) - 1)}
    scenario.write_json(out / "demo_summary.json", summary)
    log.info("MBSA %s after %d iterations at x=%.8f; gradient descent stopped at x=%.5f, f=%.5f",
             trace.status, len(trace), x, gd.x[-1], gd.fx[-1])
    return EXIT_OK if trace.status == CONVERGED else EXIT_FAIL


def cmd_simulate(args):
    cfg = scenario.load(args.config)
    out = _out_dir(args.out)
    rep, rd = scenario.run(cfg, out, beta=args.beta, max_iter=args.max_iter, seed=args.seed)
    for name, sec in rep.timings.items():
        log.info("timing %s: %.2fs", name, sec)
    log.info("median error %.3f%%, max %.3f%%", rd["median_error_pct"], rd["max_error_pct"])
    if not rep.converged:
        bad = [p for p in rd["phases"] if p["status"] != CONVERGED]
        name = bad[0]["name"] if bad else "?"
        print(f"error: phase {name} did not converge ({bad[0]['status'] if bad else 'not run'})", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _calibration_inputs(args):
    if args.config:
        cfg = scenario.load(args.config)
        if cfg["kind"] != "magnetic":
            raise scenario.ScenarioError("calibration needs a magnetic scenario")
    else:
        cfg = scenario.validate({"kind": "magnetic", "length_unit": 1e-3,
                                 "beam": {"shape": "rectangular", "length": 682, "width": 21, "thickness": 1,
                                          "E": 69e9, "rho": 2700},
                                 "constants": {"C": 67981, "n": 3.35638}})
    beam = scenario.build_beam(cfg)
    initial = dict(cfg.get("calibration", {}).get("initial", {"C": 5e4, "n": 3.0, "omega0": 10.0}))
    for k in ("C", "n", "omega0"):
        v = getattr(args, f"init_{k.lower()}")
        if v is not None:
            initial[k] = v
    return cfg, beam, initial


def cmd_calibrate(args):
    try:
        gaps, omega = read_calibration_csv(args.data)
    except OSError as exc:
        raise scenario.ScenarioError(f"cannot read {args.data}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise scenario.ScenarioError(str(exc)) from None
    if gaps.size < 4:
        raise scenario.ScenarioError(f"{args.data}: need at least 4 rows for 3 parameters, got {gaps.size}")
    cfg, beam, initial = _calibration_inputs(args)
    out = _out_dir(args.out)
    lu = cfg["constants"].get("length_unit", 1e-3)
    res = calibrate(gaps, omega, initial, beam, scenario.beam_offsets(cfg, beam), lu,
                    max_iter=200 if args.max_iter is None else args.max_iter)
    scenario.write_json(out / "calibration.json", res.to_dict())
    log.info("C=%r n=%r omega0=%r residual norm %.3e", res.C, res.n, res.omega0, res.residual_norm)
    return EXIT_OK


def cmd_validate(args):
    cfg = scenario.load(args.config)
    if cfg["kind"] == "vdw_groove":
        scenario.build_groove_scene(cfg)
    else:
        scenario.build_magnet_scene(cfg)
    print(f"{args.config}: ok ({cfg['kind']})")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mbsa", description="Model-based scanning algorithm: demos, scans, calibration")
    p.add_argument("--quiet", action="store_true", help="only print warnings and errors")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--beta", type=float, default=None, help="step size")
    common.add_argument("--max-iter", type=int, default=None, help="iteration cap")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    d = sub.add_parser("demo1d", parents=[common], help="one-dimensional MBSA vs gradient descent demo")
    d.add_argument("--x0", type=float, default=0.0, help="gradient descent start")
    d.add_argument("--gd-step", type=float, default=1e-3, help="gradient descent step")
    d.set_defaults(func=cmd_demo1d)

    s = sub.add_parser("simulate", parents=[common], help="simulate a scan scenario and reconstruct it")
    s.add_argument("--config", required=True, help="scenario JSON")
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", parents=[common], help="fit C, n and omega0 to a gap/frequency CSV")
    c.add_argument("data", help="CSV with columns gap_m, omega_rad_s")
    c.add_argument("--config", default=None, help="magnetic scenario giving beam and magnet layout")
    c.add_argument("--init-c", type=float, default=None)
    c.add_argument("--init-n", type=float, default=None)
    c.add_argument("--init-omega0", type=float, default=None)
    c.set_defaults(func=cmd_calibrate)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("--config", required=True)
    v.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except (scenario.ScenarioError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PhaseError, ModelDomainError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
