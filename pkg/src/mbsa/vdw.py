"""Van der Waals interaction between a vibrating fiber and a 2-D topography.

Full model: the added stiffness k(x) is the contour integral of the second
derivative of V = -C / r**n along the sensing direction, and the frequency
shift is its Rayleigh quotient with the mode shape.  Simplified model: a
single-interaction power law per segment with a closed-form inverse.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.constants import Avogadro

from . import _kernels
from .beam import BeamModel, StiffnessProfile, beam_grid, mode_shape, DEFAULT_INTERVALS
from .solver import ModelDomainError
from .topography import Contour, Section, PERPENDICULAR, PARALLEL

NM = 1e-9
KJ_PER_MOL = 1e3 / Avogadro  # J per pair
TRANSVERSE = "transverse"
AXIAL = "axial"
_SENSING = {TRANSVERSE: _kernels.TRANSVERSE, AXIAL: _kernels.AXIAL}


class GapError(ModelDomainError):
    """A source point came closer to the beam than the gap floor."""


class InversionDomainError(ModelDomainError):
    pass


@dataclass(frozen=True)
class LJMaterial:
    sigma: float    # nm
    epsilon: float  # kJ/mol
    name: str = ""

    def __post_init__(self):
        if not (self.sigma > 0 and self.epsilon > 0):
            raise ValueError("sigma and epsilon must be positive")


@dataclass(frozen=True)
class InteractionConstants:
    C: float
    n: float

    def __post_init__(self):
        if not (self.C > 0 and self.n > 0):
            raise ValueError("C and n must be positive")


def mix_constants(a: LJMaterial, b: LJMaterial) -> LJMaterial:
    """Lorentz-Berthelot: arithmetic sigma, geometric epsilon."""
    return LJMaterial(0.5 * (a.sigma + b.sigma), float(np.sqrt(a.epsilon * b.epsilon)),
                      f"{a.name}-{b.name}" if a.name and b.name else "")


def load_materials(path=None) -> dict:
    if path is None:
        text = resources.files("mbsa").joinpath("data/materials.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    return {k: LJMaterial(float(v["sigma_nm"]), float(v["epsilon_kJ_per_mol"]), k) for k, v in raw.items()}


def lj_constants(mat: LJMaterial, density_topography: float, density_beam: float):
    """Attractive LJ term as C / r**6 in SI.

    The 2-D model integrates over contour length and beam length, so C
    carries the two source line densities [1/m].  Returns the constants and
    the conversion factors applied.
    """
    eps = mat.epsilon * KJ_PER_MOL
    sig = mat.sigma * NM
    C = 4.0 * eps * sig ** 6 * density_topography * density_beam
    conv = {"nm_to_m": NM, "kJ_per_mol_to_J": KJ_PER_MOL, "density_topography_per_m": density_topography,
            "density_beam_per_m": density_beam, "C_SI": C, "n": 6.0}
    return InteractionConstants(C, 6.0), conv


@dataclass(frozen=True)
class Placement:
    """Beam pose: tip at g1 = tip, axis along +g1 at height g2 = beam_z."""
    tip: float
    beam_z: float
    sensing: str = TRANSVERSE


class ContourForward:
    """Full forward model for a fixed set of beam placements.

    Geometry that does not change between evaluations can be registered once
    with ``set_fixed``; its contribution is cached per placement.
    """

    def __init__(self, beam: BeamModel, constants: InteractionConstants, placements,
                 beam_intervals: int = DEFAULT_INTERVALS, node_spacing: float = None, gap_floor: float = 0.0):
        self.beam = beam
        self.constants = constants
        self.placements = list(placements)
        for p in self.placements:
            if p.sensing not in _SENSING:
                raise ValueError(f"unknown sensing direction {p.sensing!r}")
        self.x, w = beam_grid(beam, beam_intervals)
        phi2 = mode_shape(beam, self.x) ** 2
        self.bw = w * phi2
        self.modal = float(self.bw.sum())
        self.node_spacing = node_spacing
        self.gap_floor = gap_floor
        self._fixed = np.zeros(len(self.placements))

    def _nodes(self, contour: Contour):
        spacing = self.node_spacing
        if spacing is None:
            spacing = max(contour.L_top, 1e-300) / 256
        return contour.nodes(spacing)

    def _check_gap(self, i, sx, sz):
        p = self.placements[i]
        d, j = _kernels.min_distance_to_beam(p.tip - self.beam.length, p.tip, p.beam_z, sx, sz)
        if d < self.gap_floor:
            raise GapError(f"contour point ({sx[j]:.6g}, {sz[j]:.6g}) is {d:.3g} from the beam at "
                           f"placement {i}, below the gap floor {self.gap_floor:.3g}", i)

    def raw_sums(self, contour: Contour) -> np.ndarray:
        """Per placement: sum_b bw_b sum_s w_s K, without -C n and the modal normalization."""
        sx, sz, sw = self._nodes(contour)
        out = np.zeros(len(self.placements))
        for i, p in enumerate(self.placements):
            self._check_gap(i, sx, sz)
            out[i] = _kernels.pair_weighted_sum(self.x - self.beam.length + p.tip, p.beam_z, self.bw,
                                                sx, sz, sw, self.constants.n, _SENSING[p.sensing])
        return out

    def set_fixed(self, contour: Contour):
        self._fixed = self.raw_sums(contour) if len(contour) > 1 else np.zeros(len(self.placements))

    def scale(self) -> float:
        return -self.constants.C * self.constants.n / (self.beam.rho_A * self.modal)

    def __call__(self, contour: Contour) -> np.ndarray:
        """Delta omega^2 for each placement with the active contour plus the cached fixed part."""
        return self.scale() * (self._fixed + self.raw_sums(contour))

    def profile(self, contour: Contour, i: int) -> StiffnessProfile:
        sx, sz, sw = self._nodes(contour)
        self._check_gap(i, sx, sz)
        p = self.placements[i]
        k = _kernels.pair_profile(self.x - self.beam.length + p.tip, p.beam_z, sx, sz, sw,
                                  self.constants.n, _SENSING[p.sensing])
        return StiffnessProfile(self.x.copy(), -self.constants.C * self.constants.n * k)


def stiffness_profile(contour: Contour, constants: InteractionConstants, placement: Placement, beam: BeamModel,
                      resolution: float = None, beam_intervals: int = DEFAULT_INTERVALS,
                      gap_floor: float = 0.0) -> StiffnessProfile:
    """k(x) on the beam grid; ``resolution`` is the contour node spacing."""
    eng = ContourForward(beam, constants, [placement], beam_intervals, resolution, gap_floor)
    return eng.profile(contour, 0)


@dataclass
class ScanGeometry:
    placements: list
    beam: BeamModel
    node_spacing: float
    beam_intervals: int = DEFAULT_INTERVALS
    gap_floor: float = 0.0


def forward_vdw(topography, geometry: ScanGeometry, constants: InteractionConstants) -> np.ndarray:
    """Delta omega^2 per placement for a Section, a Contour or a list of either."""
    items = topography if isinstance(topography, (list, tuple)) else [topography]
    eng = ContourForward(geometry.beam, constants, geometry.placements, geometry.beam_intervals,
                         geometry.node_spacing, geometry.gap_floor)
    out = np.zeros(len(geometry.placements))
    for item in items:
        c = item.to_contour() if isinstance(item, Section) else item
        if len(c) > 1:
            out += eng(c)
    return out


@dataclass
class SimplifiedContext:
    C: float
    n: float
    L_top: float
    N: int
    phi_bar: float
    rho_A: float
    L_beam: float
    d: object = 0.0  # scalar or per-measurement array, parallel sections only


def _perp_coef(ctx):
    return (ctx.L_top / ctx.N) * (ctx.C / (ctx.n + 1.0)) / (ctx.phi_bar * ctx.rho_A)


def _par_coef(ctx):
    d = np.asarray(ctx.d, dtype=float)
    if np.any(d <= 0):
        raise ModelDomainError("parallel model needs a positive depth d")
    return ctx.C * ctx.L_top * d / (ctx.N * ctx.phi_bar)


def simplified_forward(g, orientation: str, ctx: SimplifiedContext):
    """Single-interaction model; g is g1 (perpendicular) or g2 (parallel) in the beam frame."""
    g = np.asarray(g, dtype=float)
    if orientation == PERPENDICULAR:
        gap = g - ctx.L_beam
        coef = _perp_coef(ctx)
    elif orientation == PARALLEL:
        gap = g
        coef = _par_coef(ctx)
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    bad = np.flatnonzero(np.atleast_1d(gap) <= 0)
    if bad.size:
        raise ModelDomainError(f"non-positive gap at segment {bad[0]}", int(bad[0]))
    return -coef / gap ** ctx.n


def simplified_invert(dw2, orientation: str, ctx: SimplifiedContext):
    """Closed-form inverse; Delta omega^2 must be strictly negative."""
    dw2 = np.asarray(dw2, dtype=float)
    bad = np.flatnonzero(~(np.atleast_1d(dw2) < 0))
    if bad.size:
        raise InversionDomainError(f"frequency shift must be negative, got {np.atleast_1d(dw2)[bad[0]]!r} "
                                   f"at measurement {bad[0]}", int(bad[0]))
    if orientation == PERPENDICULAR:
        return ctx.L_beam + (-_perp_coef(ctx) / dw2) ** (1.0 / ctx.n)
    if orientation == PARALLEL:
        return (-_par_coef(ctx) / dw2) ** (1.0 / ctx.n)
    raise ValueError(f"unknown orientation {orientation!r}")


def wall_kernel(C, n, gap):
    """Added stiffness of a semi-infinite wall parallel to the beam, seen by a point beside it.

    Closed form of -C n (n+1) int_0^inf (gap + s)**-(n+2) ds.
    """
    return -C * n * gap ** (-(n + 1.0))
