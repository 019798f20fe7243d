"""Clamped-free Euler-Bernoulli beam: mode shapes and Rayleigh-quotient frequency shifts."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

DEFAULT_INTERVALS = 2048


class BeamDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BeamModel:
    """Cantilever geometry and material, SI units.

    u_ss is the static deflection and is fixed at zero.
    """
    length: float
    rho_A: float
    EI: float
    mode_index: int = 1
    u_ss: float = 0.0

    def __post_init__(self):
        if not (self.length > 0 and self.rho_A > 0 and self.EI > 0):
            raise BeamDomainError("length, rho_A and EI must be positive")
        if int(self.mode_index) != self.mode_index or self.mode_index < 1:
            raise BeamDomainError("mode_index must be a positive integer")
        if self.u_ss != 0.0:
            raise BeamDomainError("only u_ss = 0 is supported")

    @classmethod
    def rectangular(cls, length, width, thickness, E, rho, mode_index=1):
        area = width * thickness
        inertia = width * thickness ** 3 / 12.0
        return cls(length, rho * area, E * inertia, mode_index)

    @classmethod
    def circular(cls, length, diameter, E, rho, mode_index=1):
        area = np.pi * diameter ** 2 / 4.0
        inertia = np.pi * diameter ** 4 / 64.0
        return cls(length, rho * area, E * inertia, mode_index)


@dataclass(frozen=True)
class StiffnessProfile:
    """Added stiffness per unit length sampled on a uniform beam grid."""
    x: np.ndarray
    k: np.ndarray


@lru_cache(maxsize=None)
def mode_eigenvalue(mode_index: int) -> float:
    """Root of 1 + cos(l) cosh(l) = 0 for the requested mode."""
    if mode_index < 1:
        raise BeamDomainError("mode_index must be >= 1")
    # the k-th root sits within (k - 1/2) pi +- pi/2; cos*cosh form overflows
    # for large l so use cos(l) + 1/cosh(l) which has the same roots
    c = (mode_index - 0.5) * np.pi
    fun = lambda l: np.cos(l) + 1.0 / np.cosh(l)
    return brentq(fun, c - 0.5 * np.pi + 1e-9, c + 0.5 * np.pi - 1e-9, xtol=1e-15, rtol=1e-15)


def _sigma_parts(lam):
    s = np.sinh(lam) + np.sin(lam)
    sigma = (np.cosh(lam) + np.cos(lam)) / s
    # 1 - sigma without cancellation
    one_minus = (-np.exp(-lam) + np.sin(lam) - np.cos(lam)) / s
    return sigma, one_minus


def _shape(z, lam):
    sigma, one_minus = _sigma_parts(lam)
    # cosh z - sigma sinh z written as decaying exponentials
    hyp = 0.5 * (one_minus * np.exp(z) + (1.0 + sigma) * np.exp(-z))
    return hyp - np.cos(z) + sigma * np.sin(z)


def mode_shape(beam: BeamModel, x):
    """phi(x) = cosh - cos - sigma (sinh - sin), tip value 2 for every mode."""
    x = np.asarray(x, dtype=float)
    tol = 1e-12 * beam.length
    if np.any(x < -tol) or np.any(x > beam.length + tol):
        raise BeamDomainError("position outside the beam")
    lam = mode_eigenvalue(beam.mode_index)
    return _shape(lam * np.clip(x, 0.0, beam.length) / beam.length, lam)


def simpson_weights(n_intervals: int, h: float) -> np.ndarray:
    if n_intervals < 2 or n_intervals % 2:
        raise ValueError("Simpson needs an even number of intervals >= 2")
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def beam_grid(beam: BeamModel, intervals: int = DEFAULT_INTERVALS):
    """Uniform grid over [0, L] with Simpson weights."""
    x = np.linspace(0.0, beam.length, intervals + 1)
    return x, simpson_weights(intervals, beam.length / intervals)


def phi_bar(beam: BeamModel, intervals: int = DEFAULT_INTERVALS) -> float:
    """Mean of (phi / phi(L))**2 over the beam."""
    x, w = beam_grid(beam, intervals)
    phi = mode_shape(beam, x)
    return float(w @ (phi / phi[-1]) ** 2) / beam.length


def modal_mass_integral(beam: BeamModel, intervals: int = DEFAULT_INTERVALS) -> float:
    x, w = beam_grid(beam, intervals)
    return float(w @ mode_shape(beam, x) ** 2)


def base_natural_frequency(beam: BeamModel) -> float:
    lam = mode_eigenvalue(beam.mode_index)
    return lam ** 2 * np.sqrt(beam.EI / (beam.rho_A * beam.length ** 4))


def rayleigh_frequency(beam: BeamModel, intervals: int = DEFAULT_INTERVALS) -> float:
    """omega from the Rayleigh quotient of the closed-form shape (cross-check for the closed form)."""
    x, w = beam_grid(beam, intervals)
    lam = mode_eigenvalue(beam.mode_index)
    z = lam * x / beam.length
    sigma, _ = _sigma_parts(lam)
    # phi'' scaled by (L/lam)^2
    curv = np.cosh(z) + np.cos(z) - sigma * (np.sinh(z) + np.sin(z))
    num = beam.EI * (lam / beam.length) ** 4 * float(w @ curv ** 2)
    den = beam.rho_A * float(w @ mode_shape(beam, x) ** 2)
    return float(np.sqrt(num / den))


def delta_omega_sq(beam: BeamModel, profile: StiffnessProfile) -> float:
    """Rayleigh quotient of the added stiffness, Simpson on the profile grid."""
    x = np.asarray(profile.x, dtype=float)
    k = np.asarray(profile.k, dtype=float)
    if x.ndim != 1 or x.shape != k.shape or x.size < 3:
        raise BeamDomainError("profile must be a 1-D grid with matching samples")
    tol = 1e-9 * beam.length
    if abs(x[0]) > tol or abs(x[-1] - beam.length) > tol or np.any(np.diff(x) <= 0):
        raise BeamDomainError("profile grid must increase strictly and span [0, L]")
    n_int = x.size - 1
    if n_int % 2 or not np.allclose(np.diff(x), x[1] - x[0], rtol=1e-9, atol=0):
        raise BeamDomainError("profile grid must be uniform with an even interval count")
    w = simpson_weights(n_int, (x[-1] - x[0]) / n_int)
    phi2 = mode_shape(beam, x) ** 2
    return float(w @ (phi2 * k)) / (beam.rho_A * float(w @ phi2))
