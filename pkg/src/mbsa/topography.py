"""2-D topography contours, piecewise-constant sections and their reassembly.

Coordinates: g1 runs along the beam axis (into the sample), g2 across it.
A perpendicular section is written (g(zeta), zeta) and a parallel one
(zeta, g(zeta)), so the free coordinate is g2 or g1 respectively.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from .beam import simpson_weights

PERPENDICULAR = "perpendicular"
PARALLEL = "parallel"
ORIENTATIONS = (PERPENDICULAR, PARALLEL)


class TopographyError(ValueError):
    pass


class PartitionError(TopographyError):
    pass


class AssemblyError(TopographyError):
    pass


def _check_orientation(o):
    if o not in ORIENTATIONS:
        raise TopographyError(f"unknown orientation {o!r}")
    return o


@dataclass
class Contour:
    zeta: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.g1 = np.asarray(self.g1, dtype=float)
        self.g2 = np.asarray(self.g2, dtype=float)
        if not (self.zeta.shape == self.g1.shape == self.g2.shape) or self.zeta.ndim != 1:
            raise TopographyError("contour arrays must be 1-D with equal length")
        if not (np.all(np.isfinite(self.g1)) and np.all(np.isfinite(self.g2))):
            raise TopographyError("contour coordinates must be finite")
        if self.zeta.size and abs(self.zeta[0]) > 0:
            raise TopographyError("zeta must start at 0")
        if np.any(np.diff(self.zeta) <= 0):
            raise TopographyError("zeta must increase strictly")

    @classmethod
    def from_points(cls, points) -> "Contour":
        """Polyline through the points; repeated consecutive points are dropped."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(p) == 0:
            return cls(np.zeros(0), np.zeros(0), np.zeros(0))
        # drop repeats, including round-off level steps that would not advance zeta
        scale = float(np.max(np.abs(p))) or 1.0
        keep = [0]
        for i in range(1, len(p)):
            if np.hypot(*(p[i] - p[keep[-1]])) > 1e-13 * scale:
                keep.append(i)
        p = p[keep]
        zeta = np.r_[0.0, np.cumsum(np.hypot(*np.diff(p, axis=0).T))]
        return cls(zeta, p[:, 0], p[:, 1])

    @classmethod
    def empty(cls):
        return cls.from_points(np.zeros((0, 2)))

    @property
    def L_top(self) -> float:
        return float(self.zeta[-1]) if self.zeta.size else 0.0

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.g1, self.g2])

    def __len__(self):
        return self.zeta.size

    def nodes(self, spacing):
        """Simpson nodes per polyline edge with node spacing at most ``spacing``.

        Returns (g1, g2, weights); shared edge endpoints appear once per edge.
        """
        if self.zeta.size < 2:
            return np.zeros(0), np.zeros(0), np.zeros(0)
        xs, zs, ws = [], [], []
        p = self.points
        for a, b in zip(p[:-1], p[1:]):
            ln = float(np.hypot(*(b - a)))
            m = max(2, 2 * int(np.ceil(ln / spacing / 2.0)))
            t = np.linspace(0.0, 1.0, m + 1)
            xs.append(a[0] + (b[0] - a[0]) * t)
            zs.append(a[1] + (b[1] - a[1]) * t)
            ws.append(simpson_weights(m, ln / m))
        return np.concatenate(xs), np.concatenate(zs), np.concatenate(ws)

    def densify(self, spacing) -> np.ndarray:
        if self.zeta.size < 2:
            return self.points
        z = np.unique(np.r_[self.zeta, np.arange(0.0, self.L_top, spacing)])
        return np.column_stack([np.interp(z, self.zeta, self.g1), np.interp(z, self.zeta, self.g2)])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["zeta", "g1", "g2"])
            for row in zip(self.zeta, self.g1, self.g2):
                wr.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Contour":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["zeta", "g1", "g2"]:
            raise TopographyError(f"{path}: expected header zeta,g1,g2")
        data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 3)
        return cls(data[:, 0], data[:, 1], data[:, 2])

    def to_dict(self):
        return {"zeta": self.zeta.tolist(), "g1": self.g1.tolist(), "g2": self.g2.tolist()}


def concatenate(contours) -> Contour:
    pts = [c.points for c in contours if len(c)]
    return Contour.from_points(np.vstack(pts)) if pts else Contour.empty()


@dataclass
class Section:
    """Piecewise-constant section.

    Segment i covers free coordinate [start + i w, start + (i + 1) w]; the
    contour runs through the segments in reverse order when ``descending``.
    """
    orientation: str
    values: np.ndarray
    start: float
    segment_width: float
    depth: float = 0.0
    descending: bool = False
    name: str = ""

    def __post_init__(self):
        _check_orientation(self.orientation)
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if self.values.size < 1:
            raise TopographyError("a section needs at least one segment")
        if not self.segment_width > 0:
            raise TopographyError("segment_width must be positive")
        if self.depth < 0:
            raise TopographyError("depth must be non-negative")

    @property
    def N(self) -> int:
        return self.values.size

    @property
    def stop(self) -> float:
        return self.start + self.N * self.segment_width

    @property
    def edges(self) -> np.ndarray:
        return self.start + self.segment_width * np.arange(self.N + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.start + self.segment_width * (np.arange(self.N) + 0.5)

    def with_values(self, values) -> "Section":
        return Section(self.orientation, values, self.start, self.segment_width,
                       self.depth, self.descending, self.name)

    def polyline(self) -> np.ndarray:
        e = self.edges
        pts = np.empty((2 * self.N, 2))
        free = np.column_stack([e[:-1], e[1:]]).ravel()
        val = np.repeat(self.values, 2)
        if self.orientation == PERPENDICULAR:
            pts[:, 0], pts[:, 1] = val, free
        else:
            pts[:, 0], pts[:, 1] = free, val
        return pts[::-1] if self.descending else pts

    def to_contour(self) -> Contour:
        return Contour.from_points(self.polyline())

    @property
    def traversal(self):
        """(first, last) free coordinate in contour order."""
        return (self.stop, self.start) if self.descending else (self.start, self.stop)

    def to_dict(self):
        return {"orientation": self.orientation, "values": self.values.tolist(), "start": self.start,
                "segment_width": self.segment_width, "depth": self.depth,
                "descending": self.descending, "name": self.name}

    @classmethod
    def from_dict(cls, d) -> "Section":
        return cls(d["orientation"], d["values"], d["start"], d["segment_width"], d.get("depth", 0.0),
                   d.get("descending", False), d.get("name", ""))


@dataclass
class GrooveSpec:
    """Rectangular groove cut into a surface facing the beam.

    The outer surface lies at g1 = outer_height (plus an optional sinusoid),
    the groove opens across g2 in [mouth, mouth + width] and reaches
    g1 = outer_height + depth.  outer_span is the extent of flat surface kept
    on each side of the mouth.  Optional sinusoidal ripples perturb the walls
    and base so they differ from the nominal rectangle.
    """
    outer_height: float
    mouth: float
    width: float
    depth: float
    outer_span: float
    outer_amplitude: float = 0.0
    outer_period: float = 0.0
    wall_amplitude: float = 0.0
    wall_period: float = 0.0

    def __post_init__(self):
        for k in ("width", "depth", "outer_span"):
            if not getattr(self, k) > 0:
                raise TopographyError(f"groove {k} must be positive")
        if self.outer_amplitude and not self.outer_period > 0:
            raise TopographyError("outer_period must be positive when outer_amplitude is set")
        if self.wall_amplitude and not self.wall_period > 0:
            raise TopographyError("wall_period must be positive when wall_amplitude is set")

    def outer(self, z):
        z = np.asarray(z, dtype=float)
        if not self.outer_amplitude:
            return np.full_like(z, self.outer_height)
        return self.outer_height + self.outer_amplitude * np.sin(2 * np.pi * (z - self.mouth) / self.outer_period)

    def ripple(self, s):
        s = np.asarray(s, dtype=float)
        if not self.wall_amplitude:
            return np.zeros_like(s)
        return self.wall_amplitude * np.sin(2 * np.pi * s / self.wall_period)

    @property
    def floor(self):
        return self.outer_height + self.depth

    @property
    def upper_edge(self):
        return self.mouth + self.width


def groove_parts(spec: GrooveSpec, samples_per_section: int = 257) -> dict:
    """Ground-truth pieces in contour order, keyed by section name."""
    n = max(2, int(samples_per_section))
    zl = np.linspace(spec.mouth - spec.outer_span, spec.mouth, n)
    zu = np.linspace(spec.upper_edge, spec.upper_edge + spec.outer_span, n)
    xs = np.linspace(spec.outer_height, spec.floor, n)
    zb = np.linspace(spec.mouth, spec.upper_edge, n)
    parts = {
        "outer_lower": np.column_stack([spec.outer(zl), zl]),
        "lower_sidewall": np.column_stack([xs, spec.mouth + spec.ripple(xs - spec.outer_height)]),
        "base": np.column_stack([spec.floor + spec.ripple(zb - spec.mouth), zb]),
        "upper_sidewall": np.column_stack([xs[::-1], spec.upper_edge + spec.ripple(xs[::-1] - spec.outer_height)]),
        "outer_upper": np.column_stack([spec.outer(zu), zu]),
    }
    return {k: Contour.from_points(v) for k, v in parts.items()}


def make_groove(spec: GrooveSpec, samples_per_section: int = 257) -> Contour:
    """Closed polyline: outer surface, lower sidewall, base, upper sidewall, outer surface."""
    return concatenate(groove_parts(spec, samples_per_section).values())


def nominal_groove_sections(spec: GrooveSpec, N: int) -> dict:
    """Flat rectangle of the groove split into N segments per piece."""
    w_out = spec.outer_span / (N // 2) if N >= 2 else spec.outer_span
    n_out = max(1, N // 2)
    return {
        "outer_lower": Section(PERPENDICULAR, np.full(n_out, spec.outer_height), spec.mouth - spec.outer_span, w_out,
                               name="outer_lower"),
        "lower_sidewall": Section(PARALLEL, np.full(N, spec.mouth), spec.outer_height, spec.depth / N,
                                  depth=spec.depth, name="lower_sidewall"),
        "base": Section(PERPENDICULAR, np.full(N, spec.floor), spec.mouth, spec.width / N, name="base"),
        "upper_sidewall": Section(PARALLEL, np.full(N, spec.upper_edge), spec.outer_height, spec.depth / N,
                                  depth=spec.depth, descending=True, name="upper_sidewall"),
        "outer_upper": Section(PERPENDICULAR, np.full(n_out, spec.outer_height), spec.upper_edge, w_out,
                               name="outer_upper"),
    }


def _free_and_value(contour: Contour, orientation):
    if orientation == PERPENDICULAR:
        return contour.g2, contour.g1
    return contour.g1, contour.g2


def segment_means(q, v, edges):
    """Exact means of the piecewise-linear v(q) over consecutive edge intervals."""
    grid = np.union1d(q, edges)
    grid = grid[(grid >= edges[0]) & (grid <= edges[-1])]
    vg = np.interp(grid, q, v)
    cum = np.r_[0.0, np.cumsum(0.5 * (vg[1:] + vg[:-1]) * np.diff(grid))]
    ce = np.interp(edges, grid, cum)
    return np.diff(ce) / np.diff(edges)


def discretize(contour: Contour, orientation: str, N: int, start=None, stop=None, name="") -> Section:
    """Piecewise-constant approximation with segment means."""
    _check_orientation(orientation)
    if N < 1:
        raise PartitionError("N must be >= 1")
    q, v = _free_and_value(contour, orientation)
    if q.size < 2:
        raise PartitionError("contour piece too short to discretize")
    dq = np.diff(q)
    if np.all(dq > 0):
        descending = False
    elif np.all(dq < 0):
        descending = True
        q, v = q[::-1], v[::-1]
    else:
        raise PartitionError(f"contour is not monotone in the free coordinate for a {orientation} section")
    a = q[0] if start is None else float(start)
    b = q[-1] if stop is None else float(stop)
    span = 1e-9 * max(abs(b - a), abs(a), abs(b))
    if a < q[0] - span or b > q[-1] + span or b <= a:
        raise PartitionError("requested range lies outside the contour piece")
    edges = a + (b - a) * np.arange(N + 1) / N
    depth = (b - a) if orientation == PARALLEL else 0.0
    return Section(orientation, segment_means(q, v, edges), a, (b - a) / N, depth, descending, name)


def _junction(prev: Section, nxt: Section):
    if prev.orientation != nxt.orientation:
        return
    if prev.descending != nxt.descending:
        raise AssemblyError(f"sections {prev.name!r} and {nxt.name!r} fold back on each other")
    tol = 1e-9 * max(prev.segment_width, nxt.segment_width)
    direction = -1.0 if prev.descending else 1.0
    gap = (nxt.traversal[0] - prev.traversal[1]) * direction
    if gap < -tol:
        raise AssemblyError(f"sections {prev.name!r} and {nxt.name!r} overlap by {-gap:g}")
    if gap > tol:
        raise AssemblyError(f"sections {prev.name!r} and {nxt.name!r} leave a gap of {gap:g}")


def assemble(pieces) -> Contour:
    """Join sections (or contour pieces) end to end in the given order."""
    pieces = list(pieces)
    if not pieces:
        return Contour.empty()
    if all(isinstance(p, Section) for p in pieces):
        for a, b in zip(pieces[:-1], pieces[1:]):
            _junction(a, b)
        return Contour.from_points(np.vstack([p.polyline() for p in pieces]))
    if all(isinstance(p, Contour) for p in pieces):
        for a, b in zip(pieces[:-1], pieces[1:]):
            if len(a) and len(b) and not np.allclose(a.points[-1], b.points[0], rtol=0, atol=1e-12 * max(a.L_top, b.L_top)):
                raise AssemblyError("contour pieces do not share their junction point")
        return concatenate(pieces)
    raise AssemblyError("assemble takes either all sections or all contours")


def split(contour: Contour, indices) -> list:
    """Cut a contour at sample indices; neighbours share the cut point."""
    cuts = [0] + sorted(int(i) for i in indices) + [len(contour) - 1]
    pts = contour.points
    return [Contour.from_points(pts[a:b + 1]) for a, b in zip(cuts[:-1], cuts[1:])]


def hausdorff(a: Contour, b: Contour, spacing) -> float:
    pa, pb = a.densify(spacing), b.densify(spacing)
    return max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0])


def sections_to_json(sections, path):
    with open(path, "w") as fh:
        json.dump([s.to_dict() for s in sections], fh, indent=2)


def sections_from_json(path):
    with open(path) as fh:
        return [Section.from_dict(d) for d in json.load(fh)]
