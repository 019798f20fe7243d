"""Simulated scans and phase-wise MBSA reconstruction.

A scene is an ordered list of named sections (the contour order).  Each scan
phase owns some of them; while a phase is solved the other sections are held
at their current best guess: the estimate if an earlier phase produced one,
the nominal geometry from the scenario otherwise.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .beam import BeamModel, phi_bar
from .solver import (ModelPair, MeasurementSet, SolverConfig, IterationTrace, ModelDomainError,
                     run_mbsa, check_convergence_condition, CONVERGED)
from .topography import (Contour, Section, GrooveSpec, PERPENDICULAR, PARALLEL, groove_parts,
                         nominal_groove_sections, discretize, assemble, hausdorff)
from .vdw import (ContourForward, InteractionConstants, Placement, SimplifiedContext, TRANSVERSE, AXIAL,
                  simplified_forward, simplified_invert)
from .magnetic import MagnetForward, MagneticConstants

log = logging.getLogger(__name__)

PHASE_ORDER = ("OuterSurface", "LowerSidewall", "UpperSidewall", "Base")


class PhaseError(RuntimeError):
    def __init__(self, phase, message, index=None):
        super().__init__(f"phase {phase}: {message}")
        self.phase = phase
        self.index = index


@dataclass
class ScanPhase:
    name: str
    orientation: str
    sections: list            # names of the scene sections solved in this phase
    placements: list          # one beam pose per segment
    depth: np.ndarray = None  # insertion depth per position, parallel phases only

    @property
    def N(self):
        return len(self.placements)


@dataclass
class PhaseResult:
    phase: ScanPhase
    estimate: np.ndarray
    truth: np.ndarray
    reference: np.ndarray
    trace: IterationTrace
    measurements: MeasurementSet
    C_eff: float
    condition_truth: object = None
    errors: dict = None
    seconds: float = 0.0


@dataclass
class ReconstructionReport:
    phases: list
    assembled: object
    errors: dict
    timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def converged(self):
        return all(p.trace.status == CONVERGED for p in self.phases)


def error_report(estimate, truth, reference=None, bin_width=0.5):
    """Per-segment percentage errors.

    Without ``reference`` the error is relative to |truth|; with it, relative
    to the true gap |truth - reference|.  Denominators below 1e-12 fall back
    to the absolute error and are flagged.
    """
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimate and truth must have the same number of segments")
    den = np.abs(tru if reference is None else tru - np.asarray(reference, dtype=float))
    flagged = den < 1e-12
    err = np.where(flagged, np.abs(est - tru), 100.0 * np.abs(est - tru) / np.where(flagged, 1.0, den))
    top = max(bin_width, float(np.max(err)) if err.size else bin_width)
    edges = np.arange(0.0, top + bin_width, bin_width)
    if edges[-1] < top:
        edges = np.r_[edges, edges[-1] + bin_width]
    counts, _ = np.histogram(err, bins=edges)
    return {"errors": err, "flagged": flagged, "median": float(np.median(err)) if err.size else 0.0,
            "max": float(np.max(err)) if err.size else 0.0, "bin_edges": edges, "counts": counts}


def add_noise(readings, sigma, seed):
    if not sigma:
        return np.array(readings, dtype=float)
    rng = np.random.default_rng(seed)
    return readings + rng.normal(0.0, sigma, size=len(readings))


class Scene:
    """Shared machinery; subclasses provide geometry, forward engines and truth."""

    order: list
    baseline = 0.0  # reading with no interaction (omega0^2 for absolute readings)

    def __init__(self, beam: BeamModel, phases, solver: SolverConfig, rel_tol=None, noise_rel=0.0, seed=0):
        self.beam = beam
        self.phases = list(phases)
        self.solver = solver
        self.rel_tol = rel_tol
        self.noise_rel = noise_rel
        self.seed = seed
        self.current = dict(self.nominal)
        self.phi_bar = phi_bar(beam)

    # geometry hooks
    def engine(self, placements):
        raise NotImplementedError

    def geometry(self, names):
        """Fixed geometry of the named sections as engine input items."""
        raise NotImplementedError

    def truth_items(self):
        raise NotImplementedError

    def truth_values(self, name):
        raise NotImplementedError

    # ---
    def _frame(self, phase: ScanPhase):
        """Offsets mapping world values to the beam frame coordinate used by the simplified model."""
        tips = np.array([p.tip for p in phase.placements])
        bz = np.array([p.beam_z for p in phase.placements])
        if phase.orientation == PERPENDICULAR:
            return tips, tips - self.beam.length, 1.0
        nominal = np.concatenate([self.nominal[n].values for n in phase.sections])
        side = float(np.sign(np.mean(nominal - bz)))
        return bz, bz, side

    def simulate(self, phase: ScanPhase) -> MeasurementSet:
        eng = self.engine(phase.placements)
        clean = self.baseline + sum(eng.raw_or_delta(item) for item in self.truth_items())
        sigma = self.noise_rel * abs(float(np.mean(clean - self.baseline)))
        seed = None if self.seed is None else self.seed + self.phases.index(phase)
        readings = add_noise(clean, sigma, seed)
        return MeasurementSet(np.arange(phase.N, dtype=float), readings, sigma, self.seed, phase.name)

    def model_pair(self, phase: ScanPhase):
        names = phase.sections
        eng = self.engine(phase.placements)
        eng.set_fixed_items(self.fixed_items(names))
        sizes = [self.current[n].N for n in names]
        splits = np.cumsum(sizes)[:-1]
        ref, origin, side = self._frame(phase)
        L_top = sum(self.current[n].N * self.current[n].segment_width for n in names)

        def active(g):
            parts = np.split(np.asarray(g, dtype=float), splits)
            return {n: self.current[n].with_values(v) for n, v in zip(names, parts)}

        def full(g, x):
            return self.baseline + eng.active_delta(self.active_items(active(g)))

        ctx = SimplifiedContext(1.0, self.n, L_top, phase.N, self.phi_bar, self.beam.rho_A, self.beam.length,
                                phase.depth if phase.orientation == PARALLEL else 0.0)

        def to_beam(g):
            g = np.asarray(g, dtype=float)
            return g - origin if phase.orientation == PERPENDICULAR else side * (g - origin)

        def to_world(gb):
            return gb + origin if phase.orientation == PERPENDICULAR else origin + side * gb

        # anchor the simplified constant on the nominal geometry of this phase
        g_nom = np.concatenate([self.nominal[n].values for n in names])
        f_nom = full(g_nom, None) - self.baseline
        unit = simplified_forward(to_beam(g_nom), phase.orientation, ctx)
        ratio = f_nom / unit
        if not np.any(ratio > 0):
            raise PhaseError(phase.name, "full model has no attractive response on the nominal geometry")
        ctx.C = float(np.median(ratio[ratio > 0]))

        pair = ModelPair(
            full_forward=full,
            simplified_forward=lambda g, x: self.baseline + simplified_forward(to_beam(g), phase.orientation, ctx),
            simplified_inverse=lambda w, x: to_world(simplified_invert(np.asarray(w) - self.baseline,
                                                                       phase.orientation, ctx)),
        )
        return pair, ctx.C, ref

    def reconstruct_phase(self, phase: ScanPhase, meas: MeasurementSet = None) -> PhaseResult:
        t0 = time.perf_counter()
        if meas is None:
            meas = self.simulate(phase)
        pair, C_eff, ref = self.model_pair(phase)
        cfg = self.solver
        if self.rel_tol is not None:
            signal = np.linalg.norm(meas.readings - self.baseline)
            cfg = SolverConfig(cfg.beta, self.rel_tol * signal, cfg.max_iter, cfg.fd_step, cfg.fd_scale,
                               cfg.check_condition, cfg.allow_unstable_beta)
        try:
            trace = run_mbsa(pair, meas, cfg)
        except ModelDomainError as exc:
            raise PhaseError(phase.name, f"{exc} (measurement index {exc.index})", exc.index) from exc
        truth = np.concatenate([self.truth_values(n) for n in phase.sections])
        cond = None
        try:
            cond = check_convergence_condition(pair, truth, meas.positions, cfg.fd_step, cfg.fd_scale)
        except ModelDomainError as exc:
            log.warning("phase %s: condition check failed: %s", phase.name, exc)
        est = trace.final_g
        sizes = np.cumsum([self.current[n].N for n in phase.sections])[:-1]
        for n, v in zip(phase.sections, np.split(est, sizes)):
            self.current[n] = self.current[n].with_values(v)
        res = PhaseResult(phase, est, truth, ref, trace, meas, C_eff, cond,
                          error_report(est, truth, ref), time.perf_counter() - t0)
        log.info("phase %s: %s in %d iterations, max error %.3f%%, %.2fs", phase.name, trace.status, len(trace),
                 res.errors["max"], res.seconds)
        return res

    def run(self, measure=None, stop_on_failure=True) -> ReconstructionReport:
        """Run every phase in order.  ``measure(i, phase)`` supplies the
        measurements; by default they are simulated from the truth."""
        t0 = time.perf_counter()
        results = []
        for i, ph in enumerate(self.phases):
            res = self.reconstruct_phase(ph, None if measure is None else measure(i, ph))
            results.append(res)
            if stop_on_failure and res.trace.status != CONVERGED:
                log.error("phase %s stopped with status %s; later phases skipped", ph.name, res.trace.status)
                break
        rep = self.report(results)
        rep.timings["total"] = time.perf_counter() - t0
        return rep

    def report(self, results) -> ReconstructionReport:
        errs = error_report(np.concatenate([r.estimate for r in results]),
                            np.concatenate([r.truth for r in results]),
                            np.concatenate([r.reference for r in results]))
        return ReconstructionReport(results, self.assembled(), errs, {r.phase.name: r.seconds for r in results})

    def assembled(self):
        return assemble([self.current[n] for n in self.order])


# ---------------------------------------------------------------- VdW groove

class _ContourEngine(ContourForward):
    def raw_or_delta(self, contour):
        return self(contour) if len(contour) > 1 else np.zeros(len(self.placements))

    def set_fixed_items(self, items):
        self._fixed = sum((self.raw_sums(c) for c in items if len(c) > 1), np.zeros(len(self.placements)))

    def active_delta(self, items):
        raw = self._fixed + sum((self.raw_sums(c) for c in items if len(c) > 1), np.zeros(len(self.placements)))
        return self.scale() * raw


class ContourScene(Scene):
    """Scene whose topography is a polyline split into named sections."""

    def __init__(self, beam, constants: InteractionConstants, nominal: dict, truth_parts: dict, phases,
                 standoff=1e-9, beam_intervals=512, nodes_per_segment=16, gap_floor=0.0, solver=None,
                 rel_tol=1e-6, noise_rel=0.0, seed=0):
        self.constants = constants
        self.n = constants.n
        self.order = list(nominal)
        self.nominal = dict(nominal)
        self.truth_parts = dict(truth_parts)
        self.standoff = standoff
        self.beam_intervals = int(beam_intervals)
        self.gap_floor = gap_floor
        self.spacing = min(s.segment_width for s in self.nominal.values()) / int(nodes_per_segment)
        super().__init__(beam, phases, solver or SolverConfig(beta=0.18, max_iter=5000, fd_scale=standoff),
                         rel_tol, noise_rel, seed)

    def engine(self, placements):
        return _ContourEngine(self.beam, self.constants, placements, self.beam_intervals, self.spacing,
                              self.gap_floor)

    def truth_items(self):
        return [assemble([self.truth_parts[n] for n in self.order])]

    def truth_values(self, name):
        sec = self.nominal[name]
        return discretize(self.truth_parts[name], sec.orientation, sec.N, sec.start, sec.stop).values

    def fixed_items(self, active):
        runs, cur = [], []
        for n in self.order:
            if n in active:
                if cur:
                    runs.append(cur)
                cur = []
            else:
                cur.append(n)
        if cur:
            runs.append(cur)
        return [assemble([self.current[n] for n in run]) for run in runs]

    def active_items(self, sections):
        """Active sections with the junction edges to their neighbours."""
        items = []
        order = self.order
        for n, sec in sections.items():
            i = order.index(n)
            pts = [sec.polyline()]
            if i > 0 and order[i - 1] not in sections:
                pts.insert(0, self.current[order[i - 1]].polyline()[-1:])
            if i + 1 < len(order) and order[i + 1] not in sections:
                pts.append(self.current[order[i + 1]].polyline()[:1])
            items.append(Contour.from_points(np.vstack(pts)))
        return items

    def hausdorff_to_truth(self):
        return hausdorff(self.assembled(), self.truth_items()[0], self.spacing)


class GrooveScene(ContourScene):
    """Rectangular groove scanned in four phases: outer surface, lower and upper sidewall, base.

    Perpendicular phases hold the tip ``standoff`` in front of the nominal
    surface.  In the sidewall phases the beam runs ``standoff`` from the
    nominal wall and the tip sits at the deep end of each segment, stopping
    ``clearance`` short of the floor.
    """

    def __init__(self, beam, constants: InteractionConstants, groove: GrooveSpec, N=16, standoff=1e-9,
                 clearance=None, truth_samples=257, **kw):
        self.groove = groove
        self.N = int(N)
        self.clearance = standoff if clearance is None else clearance
        if beam.length < groove.depth + standoff:
            raise ValueError("beam is shorter than the groove it has to reach into")
        nominal = nominal_groove_sections(groove, self.N)
        g, h = groove, standoff
        outer = []
        for name in ("outer_lower", "outer_upper"):
            outer += [Placement(g.outer_height - h, z, AXIAL) for z in nominal[name].centers]
        phases = [ScanPhase("OuterSurface", PERPENDICULAR, ["outer_lower", "outer_upper"], outer)]
        for name, label, z in (("lower_sidewall", "LowerSidewall", g.mouth + h),
                               ("upper_sidewall", "UpperSidewall", g.upper_edge - h)):
            tips = np.minimum(nominal[name].edges[1:], g.floor - self.clearance)
            phases.append(ScanPhase(label, PARALLEL, [name], [Placement(t, z, TRANSVERSE) for t in tips],
                                    depth=tips - g.outer_height))
        phases.append(ScanPhase("Base", PERPENDICULAR, ["base"],
                                [Placement(g.floor - h, z, AXIAL) for z in nominal["base"].centers]))
        super().__init__(beam, constants, nominal, groove_parts(groove, truth_samples), phases, standoff=standoff,
                         **kw)


def flat_scene(beam, constants, span, N=16, standoff=1e-9, height=0.0, **kw):
    """Single flat surface scanned in one perpendicular phase."""
    nominal = {"surface": Section(PERPENDICULAR, np.full(N, height), 0.0, span / N, name="surface")}
    truth = {"surface": Contour.from_points([[height, 0.0], [height, span]])}
    phase = ScanPhase("OuterSurface", PERPENDICULAR, ["surface"],
                      [Placement(height - standoff, z, AXIAL) for z in nominal["surface"].centers])
    return ContourScene(beam, constants, nominal, truth, [phase], standoff=standoff, **kw)


# ---------------------------------------------------------------- magnets

class _MagnetEngine(MagnetForward):
    def raw_or_delta(self, points):
        return self.delta(points)

    def set_fixed_items(self, items):
        pts = [p for p in items if len(p)]
        self.set_fixed(np.vstack(pts) if pts else np.zeros((0, 2)))

    def active_delta(self, items):
        return self.delta(np.vstack(list(items)))


def section_points(sec: Section) -> np.ndarray:
    """One magnet per segment, at the segment centre."""
    if sec.orientation == PERPENDICULAR:
        return np.column_stack([sec.values, sec.centers])
    return np.column_stack([sec.centers, sec.values])


class MagnetScene(Scene):
    """Two connected magnet arrays: one across the beam axis, one along it.

    The across array sits at g1 ~ 0 for g2 < 0; the along array at g2 ~ 0 for
    g1 > 0, like the outer surface and one sidewall of a groove.
    """
    order = ["perpendicular", "parallel"]

    def __init__(self, beam, constants: MagneticConstants, count=11, spacing=5e-3, amplitude=2.5e-3,
                 period=40e-3, distance=20e-3, beam_count=11, beam_spacing=5e-3, solver=None, rel_tol=1e-8,
                 noise_rel=0.0, seed=0, gap_floor=0.0):
        self.constants = constants
        self.n = constants.n
        self.baseline = constants.omega0 ** 2
        self.count = int(count)
        self.gap_floor = gap_floor
        self.offsets = beam.length - beam_spacing * np.arange(beam_count)[::-1]
        if self.offsets[0] < 0:
            raise ValueError("beam magnets do not fit on the beam")
        w = spacing
        self.nominal = {
            "perpendicular": Section(PERPENDICULAR, np.zeros(count), -w * (count + 0.5), w, name="perpendicular"),
            "parallel": Section(PARALLEL, np.zeros(count), 0.5 * w, w, name="parallel"),
        }
        k = 2 * np.pi / period
        self.truth = {
            "perpendicular": amplitude * np.sin(k * self.nominal["perpendicular"].centers),
            "parallel": amplitude * np.sin(k * self.nominal["parallel"].centers),
        }
        perp = [Placement(-distance, z, AXIAL) for z in self.nominal["perpendicular"].centers]
        par_tips = self.nominal["parallel"].centers
        par = [Placement(t, distance, TRANSVERSE) for t in par_tips]
        phases = [ScanPhase("Perpendicular", PERPENDICULAR, ["perpendicular"], perp),
                  ScanPhase("Parallel", PARALLEL, ["parallel"], par, depth=par_tips.copy())]
        super().__init__(beam, phases, solver or SolverConfig(beta=0.5, max_iter=2000, fd_scale=distance),
                         rel_tol, noise_rel, seed)

    def engine(self, placements):
        return _MagnetEngine(self.beam, self.constants, self.offsets, placements, self.gap_floor)

    def truth_items(self):
        return [np.vstack([section_points(self.nominal[n].with_values(self.truth[n])) for n in self.order])]

    def truth_values(self, name):
        return self.truth[name]

    def fixed_items(self, active):
        return [section_points(self.current[n]) for n in self.order if n not in active]

    def active_items(self, sections):
        return [section_points(s) for s in sections.values()]

    def assembled(self):
        return np.vstack([section_points(self.current[n]) for n in self.order])
