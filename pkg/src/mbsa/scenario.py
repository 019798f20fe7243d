"""Scenario files: validation, scene construction and result artifacts.

Lengths in a scenario are given in ``length_unit`` metres; material moduli
and densities are SI.  See README for the schema.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from .beam import BeamModel, base_natural_frequency
from .harness import GrooveScene, MagnetScene, ReconstructionReport, error_report
from .magnetic import MagneticConstants, calibrate, calibration_forward, write_calibration_csv
from .solver import SolverConfig, write_trace_csv
from .topography import GrooveSpec
from .vdw import NM, load_materials, mix_constants, lj_constants

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    """Invalid or unreadable scenario file."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

BEAM_SCHEMA = {
    "type": "object",
    "required": ["shape", "length", "E", "rho"],
    "properties": {
        "shape": {"enum": ["rectangular", "circular"]},
        "length": _pos, "width": _pos, "thickness": _pos, "diameter": _pos, "E": _pos, "rho": _pos,
    },
    "additionalProperties": False,
}

SOLVER_SCHEMA = {
    "type": "object",
    "properties": {
        "beta": _pos, "rel_tol": _pos, "max_iter": {"type": "integer", "minimum": 1}, "fd_step": _pos,
    },
    "additionalProperties": False,
}

NOISE_SCHEMA = {
    "type": "object",
    "properties": {"sigma_rel": {"type": "number", "minimum": 0}},
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["kind", "length_unit", "beam"],
    "properties": {
        "kind": {"enum": ["vdw_groove", "magnetic"]},
        "description": {"type": "string"},
        "length_unit": _pos,
        "seed": {"type": "integer", "minimum": 0},
        "beam": BEAM_SCHEMA,
        "solver": SOLVER_SCHEMA,
        "noise": NOISE_SCHEMA,
        "materials": {
            "type": "object",
            "required": ["topography", "beam"],
            "properties": {
                "topography": {"type": "string"}, "beam": {"type": "string"},
                "sites_per_sigma": _pos,
            },
            "additionalProperties": False,
        },
        "groove": {
            "type": "object",
            "required": ["width", "depth", "outer_span"],
            "properties": {k: _num for k in ("outer_height", "mouth", "width", "depth", "outer_span",
                                             "outer_amplitude", "outer_period", "wall_amplitude", "wall_period")},
            "additionalProperties": False,
        },
        "scan": {
            "type": "object",
            "properties": {
                "N": {"type": "integer", "minimum": 2}, "standoff": _pos, "clearance": _pos,
                "beam_intervals": {"type": "integer", "minimum": 8},
                "nodes_per_segment": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "magnets": {
            "type": "object",
            "properties": {
                "count": {"type": "integer", "minimum": 2}, "spacing": _pos,
                "beam_count": {"type": "integer", "minimum": 1}, "beam_spacing": _pos,
                "amplitude": {"type": "number", "minimum": 0}, "period": _pos, "distance": _pos,
            },
            "additionalProperties": False,
        },
        "constants": {
            "type": "object",
            "required": ["C", "n"],
            "properties": {"C": _pos, "n": _pos, "omega0": _pos, "length_unit": _pos},
            "additionalProperties": False,
        },
        "calibration": {
            "type": "object",
            "required": ["gaps", "initial"],
            "properties": {
                "gaps": {"type": "array", "items": _pos, "minItems": 4},
                "initial": {"type": "object", "required": ["C", "n", "omega0"],
                            "properties": {"C": _pos, "n": _pos, "omega0": _pos},
                            "additionalProperties": False},
                "sigma_rel": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "vdw_groove"}}},
         "then": {"required": ["materials", "groove"]}},
        {"if": {"properties": {"kind": {"const": "magnetic"}}},
         "then": {"required": ["constants"]}},
    ],
    "additionalProperties": False,
}


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from None
    b = cfg["beam"]
    need = ("width", "thickness") if b["shape"] == "rectangular" else ("diameter",)
    missing = [k for k in need if k not in b]
    if missing:
        raise ScenarioError(f"beam: {b['shape']} beam needs {', '.join(missing)}")
    if cfg["kind"] == "vdw_groove":
        mats = load_materials()
        for role in ("topography", "beam"):
            if cfg["materials"][role] not in mats:
                raise ScenarioError(f"materials/{role}: unknown material {cfg['materials'][role]!r}; "
                                    f"known: {', '.join(sorted(mats))}")
    return cfg


def load(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return validate(cfg)


def build_beam(cfg) -> BeamModel:
    b, u = cfg["beam"], cfg["length_unit"]
    if b["shape"] == "rectangular":
        return BeamModel.rectangular(b["length"] * u, b["width"] * u, b["thickness"] * u, b["E"], b["rho"])
    return BeamModel.circular(b["length"] * u, b["diameter"] * u, b["E"], b["rho"])


def _solver(cfg, defaults, fd_scale, beta=None, max_iter=None):
    s = {**defaults, **cfg.get("solver", {})}
    if beta is not None:
        s["beta"] = beta
    if max_iter is not None:
        s["max_iter"] = max_iter
    conf = SolverConfig(beta=s["beta"], max_iter=s["max_iter"], fd_step=s.get("fd_step", 1e-6), fd_scale=fd_scale)
    return conf, s["rel_tol"]


def build_groove_scene(cfg, beta=None, max_iter=None, seed=None):
    u = cfg["length_unit"]
    mats = load_materials()
    m = mix_constants(mats[cfg["materials"]["topography"]], mats[cfg["materials"]["beam"]])
    density = cfg["materials"].get("sites_per_sigma", 1.0) / (m.sigma * NM)
    consts, conv = lj_constants(m, density, density)
    g = {k: v * u for k, v in cfg["groove"].items()}
    groove = GrooveSpec(g.get("outer_height", 0.0), g.get("mouth", 0.0), g["width"], g["depth"], g["outer_span"],
                        g.get("outer_amplitude", 0.0), g.get("outer_period", 0.0), g.get("wall_amplitude", 0.0),
                        g.get("wall_period", 0.0))
    sc = cfg.get("scan", {})
    standoff = sc.get("standoff", 1.0) * u
    solver, rel_tol = _solver(cfg, {"beta": 0.18, "rel_tol": 1e-6, "max_iter": 5000}, standoff, beta, max_iter)
    scene = GrooveScene(build_beam(cfg), consts, groove, N=sc.get("N", 16), standoff=standoff,
                        clearance=sc.get("clearance", sc.get("standoff", 1.0)) * u,
                        beam_intervals=sc.get("beam_intervals", 512),
                        nodes_per_segment=sc.get("nodes_per_segment", 16), gap_floor=0.5 * m.sigma * NM,
                        solver=solver, rel_tol=rel_tol, noise_rel=cfg.get("noise", {}).get("sigma_rel", 0.0),
                        seed=cfg.get("seed", 0) if seed is None else seed)
    scene.conversions = conv
    return scene


def build_magnet_scene(cfg, constants: MagneticConstants = None, beta=None, max_iter=None, seed=None):
    u = cfg["length_unit"]
    beam = build_beam(cfg)
    mg = cfg.get("magnets", {})
    if constants is None:
        constants = scenario_constants(cfg, beam)
    dist = mg.get("distance", 20.0) * u
    solver, rel_tol = _solver(cfg, {"beta": 1.0, "rel_tol": 1e-6, "max_iter": 20000}, dist, beta, max_iter)
    return MagnetScene(beam, constants, count=mg.get("count", 11), spacing=mg.get("spacing", 5.0) * u,
                       amplitude=mg.get("amplitude", 2.5) * u, period=mg.get("period", 40.0) * u, distance=dist,
                       beam_count=mg.get("beam_count", 11), beam_spacing=mg.get("beam_spacing", 5.0) * u,
                       solver=solver, rel_tol=rel_tol, noise_rel=cfg.get("noise", {}).get("sigma_rel", 0.0),
                       seed=cfg.get("seed", 0) if seed is None else seed)


def scenario_constants(cfg, beam) -> MagneticConstants:
    c = cfg["constants"]
    omega0 = c.get("omega0") or base_natural_frequency(beam)
    return MagneticConstants(c["C"], c["n"], omega0, c.get("length_unit", 1e-3))


def beam_offsets(cfg, beam):
    mg = cfg.get("magnets", {})
    count, spacing = mg.get("beam_count", 11), mg.get("beam_spacing", 5.0) * cfg["length_unit"]
    return beam.length - spacing * np.arange(count)[::-1]


def synthetic_calibration(cfg, seed=None):
    """Calibration data (gap, omega) generated from the scenario's constants."""
    beam = build_beam(cfg)
    truth = scenario_constants(cfg, beam)
    cal = cfg["calibration"]
    gaps = np.asarray(cal["gaps"], dtype=float) * cfg["length_unit"]
    w2 = calibration_forward(gaps, truth.C, truth.n, truth.omega0, beam, beam_offsets(cfg, beam), truth.length_unit)
    omega = np.sqrt(w2)
    sig = cal.get("sigma_rel", 0.0)
    if sig:
        rng = np.random.default_rng(cfg.get("seed", 0) if seed is None else seed)
        omega = omega + rng.normal(0.0, sig * float(np.mean(omega)), size=omega.size)
    return gaps, omega


# ---------------------------------------------------------------- artifacts

def atomic_write(path, write):
    """Call ``write(tmp_path)`` and move the result into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    def w(tmp):
        with open(tmp, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    atomic_write(path, w)


def write_histogram_csv(path, edges, counts):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["bin_lo_pct", "bin_hi_pct", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            wr.writerow([repr(float(lo)), repr(float(hi)), str(int(c))])


def read_histogram_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["bin_lo_pct", "bin_hi_pct", "count"]:
        raise ValueError(f"{path}: expected header bin_lo_pct,bin_hi_pct,count")
    body = rows[1:]
    edges = np.array([float(r[0]) for r in body] + ([float(body[-1][1])] if body else []))
    return edges, np.array([int(r[2]) for r in body])


def write_points_csv(path, points):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["g1", "g2"])
        for p in np.asarray(points, dtype=float).reshape(-1, 2):
            wr.writerow([repr(float(p[0])), repr(float(p[1]))])


def read_points_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["g1", "g2"]:
        raise ValueError(f"{path}: expected header g1,g2")
    return np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 2)


def _flt(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def report_dict(rep: ReconstructionReport, cfg, extra=None) -> dict:
    phases = []
    for r in rep.phases:
        d = {
            "name": r.phase.name,
            "orientation": r.phase.orientation,
            "N": r.phase.N,
            "status": r.trace.status,
            "iterations": len(r.trace),
            "final_error_norm": float(r.trace.error_norm[-1]) if len(r.trace) else None,
            "monotone": r.trace.is_monotone(),
            "simplified_C": r.C_eff,
            "noise_sigma": r.measurements.noise_sigma,
            "estimate": _flt(r.estimate),
            "truth": _flt(r.truth),
            "reference": _flt(r.reference),
            "errors_pct": _flt(r.errors["errors"]),
            "median_error_pct": r.errors["median"],
            "max_error_pct": r.errors["max"],
        }
        if r.condition_truth is not None:
            d["condition_at_truth"] = {"positive_definite": bool(r.condition_truth.is_positive_definite),
                                       "min_eigenvalue": float(r.condition_truth.min_eigenvalue)}
        phases.append(d)
    out = {
        "kind": cfg["kind"],
        "seed": cfg.get("seed", 0),
        "converged": rep.converged,
        "phases": phases,
        "errors_pct": _flt(rep.errors["errors"]),
        "flagged": [bool(f) for f in rep.errors["flagged"]],
        "median_error_pct": rep.errors["median"],
        "max_error_pct": rep.errors["max"],
    }
    out.update(extra or {})
    return out


def write_artifacts(out_dir, rep: ReconstructionReport, cfg, extra=None, contour=None, points=None):
    """Trace CSV per phase, assembled topography CSV, histogram CSV and report JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for r in rep.phases:
        p = out / f"trace_{r.phase.name}.csv"
        atomic_write(p, lambda tmp, t=r.trace: write_trace_csv(t, tmp))
        files.append(p.name)
    if contour is not None:
        atomic_write(out / "contour.csv", contour.to_csv)
        files.append("contour.csv")
    if points is not None:
        atomic_write(out / "magnets.csv", lambda tmp: write_points_csv(tmp, points))
        files.append("magnets.csv")
    atomic_write(out / "histogram.csv",
                 lambda tmp: write_histogram_csv(tmp, rep.errors["bin_edges"], rep.errors["counts"]))
    files.append("histogram.csv")
    rd = report_dict(rep, cfg, extra)
    rd["artifacts"] = sorted(files + ["report.json"])
    write_json(out / "report.json", rd)
    return rd


def run(cfg, out_dir, beta=None, max_iter=None, seed=None):
    """Run a validated scenario, write its artifacts and return the report dict."""
    if seed is not None:
        cfg = {**cfg, "seed": seed}
    if cfg["kind"] == "vdw_groove":
        scene = build_groove_scene(cfg, beta, max_iter)
        rep = scene.run()
        extra = {"hausdorff_m": float(scene.hausdorff_to_truth()),
                 "segment_width_m": float(min(s.segment_width for s in scene.nominal.values())),
                 "unit_conversions": scene.conversions}
        rd = write_artifacts(out_dir, rep, cfg, extra, contour=rep.assembled)
    else:
        extra = {}
        constants = None
        if "calibration" in cfg:
            beam = build_beam(cfg)
            gaps, omega = synthetic_calibration(cfg)
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            atomic_write(Path(out_dir) / "calibration_data.csv", lambda tmp: write_calibration_csv(tmp, gaps, omega))
            res = calibrate(gaps, omega, cfg["calibration"]["initial"], beam, beam_offsets(cfg, beam),
                            cfg["constants"].get("length_unit", 1e-3))
            constants = MagneticConstants(res.C, res.n, res.omega0, cfg["constants"].get("length_unit", 1e-3))
            extra["calibration"] = res.to_dict()
        truth_scene = build_magnet_scene(cfg, beta=beta, max_iter=max_iter)
        if constants is None:
            rep = truth_scene.run()
        else:
            # measurements come from the scenario constants, the inversion uses the calibrated ones
            scene = build_magnet_scene(cfg, constants, beta, max_iter)
            rep = scene.run(measure=lambda i, ph: truth_scene.simulate(truth_scene.phases[i]))
        rd = write_artifacts(out_dir, rep, cfg, extra, points=rep.assembled)
    return rep, rd
