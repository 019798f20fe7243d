"""Magnetic analog of the fiber experiment: discrete magnets on a beam and on a topography."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .beam import BeamModel, base_natural_frequency, mode_shape, modal_mass_integral
from .solver import ModelDomainError
from .vdw import GapError, Placement, TRANSVERSE, _SENSING

log = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    pass


@dataclass
class MagnetArray:
    positions: np.ndarray
    spacing: float
    polarity: int = 1

    def __post_init__(self):
        self.positions = np.atleast_1d(np.asarray(self.positions, dtype=float))
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("magnet positions must increase strictly")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @classmethod
    def uniform(cls, count, spacing, start=0.0, polarity=1):
        return cls(start + spacing * np.arange(count), spacing, polarity)

    def __len__(self):
        return self.positions.size


@dataclass(frozen=True)
class MagneticConstants:
    """C and n act on lengths expressed in ``length_unit`` metres; stiffness comes out in N/m."""
    C: float
    n: float
    omega0: float = 0.0
    length_unit: float = 1e-3


def dipole_potential(r, C):
    """V = -C / r**3."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ModelDomainError("separation must be positive")
    return -C / r ** 3


def discrete_stiffness(beam_x, topo_g1, topo_g2, C, n, u_ss=0.0, sensing=TRANSVERSE, length_unit=1.0,
                       gap_floor=0.0):
    """Added stiffness at each beam magnet from point sources, in the beam frame.

    The transverse form is Cn ((g1 - x)^2 - (n+1)(g2 - u_ss)^2) / r^(n+4) summed
    over topography magnets.
    """
    bx = np.atleast_1d(np.asarray(beam_x, dtype=float)) / length_unit
    g1 = np.atleast_1d(np.asarray(topo_g1, dtype=float)) / length_unit
    g2 = (np.atleast_1d(np.asarray(topo_g2, dtype=float)) - u_ss) / length_unit
    d1 = g1[None, :] - bx[:, None]
    d2 = np.broadcast_to(g2[None, :], d1.shape)
    r = np.hypot(d1, d2)
    if r.size and r.min() * length_unit < gap_floor:
        j, i = np.unravel_index(np.argmin(r), r.shape)
        raise GapError(f"beam magnet {j} and topography magnet {i} are closer than the gap floor", int(j))
    if sensing == TRANSVERSE:
        num = d1 ** 2 - (n + 1.0) * d2 ** 2
    else:
        num = d2 ** 2 - (n + 1.0) * d1 ** 2
    return C * n * np.sum(num / r ** (n + 4.0), axis=1)


class MagnetForward:
    """omega^2 at a set of beam placements for point-magnet topographies.

    ``beam_offsets`` are the beam magnet positions measured from the clamp.
    """

    def __init__(self, beam: BeamModel, constants: MagneticConstants, beam_offsets, placements, gap_floor=0.0):
        self.beam = beam
        self.constants = constants
        self.offsets = np.asarray(beam_offsets, dtype=float)
        self.placements = list(placements)
        self.phi2 = mode_shape(beam, self.offsets) ** 2
        self.modal = modal_mass_integral(beam)
        self.gap_floor = gap_floor
        self._fixed = np.zeros(len(self.placements))

    def raw_sums(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        c = self.constants
        ell = c.length_unit
        out = np.zeros(len(self.placements))
        if len(pts) == 0:
            return out
        for i, p in enumerate(self.placements):
            bx = (p.tip - self.beam.length + self.offsets) / ell
            sx, sz = pts[:, 0] / ell, pts[:, 1] / ell
            d = np.hypot(sx[None, :] - bx[:, None], sz[None, :] - p.beam_z / ell).min()
            if d * ell < self.gap_floor:
                raise GapError(f"magnet closer than the gap floor at placement {i}", i)
            out[i] = _kernels.pair_weighted_sum(bx, p.beam_z / ell, self.phi2, sx, sz, np.ones(len(sx)),
                                                c.n, _SENSING[p.sensing])
        return out

    def set_fixed(self, points):
        self._fixed = self.raw_sums(points)

    def delta(self, points) -> np.ndarray:
        c = self.constants
        return -c.C * c.n * (self._fixed + self.raw_sums(points)) / (self.beam.rho_A * self.modal)

    def __call__(self, points) -> np.ndarray:
        return self.constants.omega0 ** 2 + self.delta(points)


def forward_magnetic(points, beam: BeamModel, constants: MagneticConstants, beam_offsets, placements):
    """omega^2 = omega0^2 + Delta omega^2 for magnets at ``points`` (k x 2, world frame)."""
    return MagnetForward(beam, constants, beam_offsets, placements)(points)


def calibration_forward(gaps, C, n, omega0, beam: BeamModel, beam_offsets, length_unit=1e-3):
    """omega^2 with a single magnet at distance ``gap`` straight across from the tip magnet."""
    gaps = np.asarray(gaps, dtype=float)
    phi2 = mode_shape(beam, beam_offsets) ** 2
    modal = modal_mass_integral(beam)
    out = np.empty(gaps.size)
    tip = np.max(beam_offsets)
    for j, g in enumerate(gaps):
        k = discrete_stiffness(beam_offsets, [tip], [g], C, n, length_unit=length_unit)
        out[j] = omega0 ** 2 + float(k @ phi2) / (beam.rho_A * modal)
    return out


@dataclass
class CalibrationResult:
    C: float
    n: float
    omega0: float
    residual_norm: float
    residuals: np.ndarray
    iterations: int = 0
    objective_history: list = field(default_factory=list)

    def to_dict(self):
        return {"C": self.C, "n": self.n, "omega0": self.omega0, "residual_norm": self.residual_norm,
                "iterations": self.iterations, "residuals": [float(v) for v in self.residuals],
                "objective_history": [float(v) for v in self.objective_history]}


def _lm(resid, p0, tol=1e-10, max_iter=200, fd_rel=1e-7):
    """Levenberg-damped Gauss-Newton with a central-difference Jacobian."""
    p = np.asarray(p0, dtype=float).copy()
    r = resid(p)
    obj = float(r @ r)
    hist = [obj]
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = np.empty((r.size, p.size))
        for k in range(p.size):
            h = fd_rel * max(1.0, abs(p[k]))
            e = np.zeros_like(p)
            e[k] = h
            J[:, k] = (resid(p + e) - resid(p - e)) / (2 * h)
        A = J.T @ J
        g = J.T @ r
        if not np.all(np.isfinite(A)) or np.linalg.matrix_rank(A) < p.size:
            raise CalibrationError(f"singular normal equations at iteration {it}")
        while True:
            step = np.linalg.solve(A + lam * np.diag(np.diag(A)), -g)
            p_new = p + step
            r_new = resid(p_new)
            obj_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if obj_new <= obj:
                break
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left: at a minimum to working precision
                return p, r, hist, it
        p, r, obj = p_new, r_new, obj_new
        hist.append(obj)
        lam = max(lam / 10.0, 1e-12)
        if np.linalg.norm(step) <= tol * (np.linalg.norm(p) + tol):
            return p, r, hist, it
    raise CalibrationError(f"no convergence after {max_iter} iterations, objective {obj:.3e}")


def calibrate(known_gaps, measured_omega, initial, beam: BeamModel, beam_offsets, length_unit=1e-3,
              tol=1e-10, max_iter=200) -> CalibrationResult:
    """Fit (C, n, omega0) to single-magnet frequency data.

    ``initial`` is a mapping with keys C, n, omega0.  C and n are fitted in
    log space so they stay positive.
    """
    gaps = np.asarray(known_gaps, dtype=float)
    om = np.asarray(measured_omega, dtype=float)
    if gaps.size < 4 or gaps.size != om.size:
        raise CalibrationError(f"need at least 4 (gap, omega) pairs, got {gaps.size}")
    if np.any(gaps <= 0) or np.unique(gaps).size != gaps.size:
        raise CalibrationError("gaps must be positive and distinct")
    target = om ** 2
    scale = float(np.max(np.abs(target))) or 1.0

    def resid(p):
        model = calibration_forward(gaps, np.exp(p[0]), np.exp(p[1]), p[2], beam, beam_offsets, length_unit)
        return (model - target) / scale

    p0 = [np.log(initial["C"]), np.log(initial["n"]), initial["omega0"]]
    p, r, hist, it = _lm(resid, p0, tol, max_iter)
    res = r * scale
    out = CalibrationResult(float(np.exp(p[0])), float(np.exp(p[1])), float(abs(p[2])),
                            float(np.linalg.norm(res)), res, it, [h * scale ** 2 for h in hist])
    log.info("calibration: C=%.6g n=%.6g omega0=%.6g after %d iterations", out.C, out.n, out.omega0, it)
    return out


def read_calibration_csv(path):
    """Rows of gap_m, omega_rad_s; errors name the offending row and column."""
    gaps, om = [], []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or [h.strip() for h in header[:2]] != ["gap_m", "omega_rad_s"]:
            raise ValueError(f"{path}: expected header gap_m,omega_rad_s")
        for row_no, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise ValueError(f"{path}: row {row_no} has {len(row)} columns, expected 2")
            vals = []
            for col, cell in zip(("gap_m", "omega_rad_s"), row[:2]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(f"{path}: row {row_no}, column {col}: not a number: {cell!r}") from None
            gaps.append(vals[0])
            om.append(vals[1])
    return np.array(gaps), np.array(om)


def write_calibration_csv(path, gaps, omega):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["gap_m", "omega_rad_s"])
        for g, w in zip(gaps, omega):
            wr.writerow([repr(float(g)), repr(float(w))])
