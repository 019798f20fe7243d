"""Model-based successive approximation (MBSA).

The exact forward model f is hard to invert; a simplified model f_s has a
closed-form inverse.  The working target is updated as

    g_k       = f_s^-1(w_k)
    e_k       = w_d - f(g_k)
    w_{k+1}   = w_k + beta * e_k,      w_1 = w_d

until ||e_k|| falls below the tolerance.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)

CONVERGED = "Converged"
MAX_ITERATIONS = "MaxIterations"
DIVERGED = "Diverged"
DIVERGENCE_FACTOR = 1e6


class ConfigurationError(ValueError):
    pass


class ModelDomainError(ValueError):
    """A model could not be evaluated; ``index`` names the offending measurement if known."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass
class ModelPair:
    full_forward: Callable[[np.ndarray, np.ndarray], np.ndarray]
    simplified_forward: Callable[[np.ndarray, np.ndarray], np.ndarray]
    simplified_inverse: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class MeasurementSet:
    positions: np.ndarray
    readings: np.ndarray
    noise_sigma: float = 0.0
    seed: Optional[int] = None
    phase: Optional[str] = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.readings = np.asarray(self.readings, dtype=float)
        if self.readings.ndim != 1 or len(self.positions) != len(self.readings):
            raise ValueError("positions and readings must have matching lengths")
        if not np.all(np.isfinite(self.readings)):
            raise ValueError("readings must be finite")


@dataclass
class SolverConfig:
    beta: float = 0.5
    tol: float = 1e-10
    max_iter: int = 200
    fd_step: float = 1e-6
    fd_scale: float = 1.0
    check_condition: bool = False
    # the (0, 2) bound is enforced unless a caller explicitly studies unstable steps
    allow_unstable_beta: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.allow_unstable_beta:
            if not self.beta > 0:
                raise ConfigurationError(f"beta must be positive, got {self.beta}")
        elif not (0.0 < self.beta < 2.0):
            raise ConfigurationError(f"beta must lie in (0, 2), got {self.beta}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not (self.fd_step > 0 and self.fd_scale > 0):
            raise ConfigurationError("fd_step and fd_scale must be positive")


@dataclass
class ConditionReport:
    M: np.ndarray
    is_positive_definite: bool
    min_eigenvalue: float


@dataclass
class IterationTrace:
    g: list = field(default_factory=list)
    omega_hat: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    error_norm: list = field(default_factory=list)
    status: str = MAX_ITERATIONS
    condition: Optional[ConditionReport] = None

    def __len__(self):
        return len(self.error_norm)

    @property
    def final_g(self) -> np.ndarray:
        return self.g[-1]

    def record(self, g, w, e):
        self.g.append(np.array(g, dtype=float))
        self.omega_hat.append(np.array(w, dtype=float))
        self.errors.append(np.array(e, dtype=float))
        self.error_norm.append(float(np.linalg.norm(e)))

    def is_monotone(self, slack=1e-12) -> bool:
        J = np.asarray(self.error_norm)
        return bool(np.all(J[1:] <= J[:-1] * (1.0 + slack)))

    def to_csv(self, path):
        write_trace_csv(self, path)


def _as_vec(y, name):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.ndim != 1:
        raise ModelDomainError(f"{name} must return a 1-D vector")
    return y


def _invert(models, w, x):
    try:
        g = models.simplified_inverse(w, x)
    except ModelDomainError:
        raise
    except (ValueError, FloatingPointError) as exc:
        raise ModelDomainError(f"simplified inverse failed: {exc}") from exc
    g = _as_vec(g, "simplified_inverse")
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise ModelDomainError(f"simplified inverse is not finite at measurement {bad[0]}", int(bad[0]))
    return g


def mbsa_step(omega_hat, models: ModelPair, measurements: MeasurementSet, beta: float):
    """One update; returns (g_k, e_k, omega_hat_{k+1})."""
    w = np.asarray(omega_hat, dtype=float)
    g = _invert(models, w, measurements.positions)
    f = _as_vec(models.full_forward(g, measurements.positions), "full_forward")
    e = measurements.readings - f
    return g, e, w + beta * e


def run_mbsa(models: ModelPair, measurements: MeasurementSet, config: SolverConfig = None,
             callback=None, omega_init=None) -> IterationTrace:
    """Iterate from omega_hat = omega_d (or ``omega_init``) until J <= tol, divergence or max_iter."""
    config = SolverConfig() if config is None else config
    config.validate()
    if len(measurements.readings) == 0:
        raise ValueError("empty measurement set")
    trace = IterationTrace()
    if omega_init is None:
        w = measurements.readings.copy()
    else:
        w = np.broadcast_to(np.asarray(omega_init, dtype=float), measurements.readings.shape).copy()
    J0 = None
    for k in range(int(config.max_iter)):
        g, e, w_next = mbsa_step(w, models, measurements, config.beta)
        trace.record(g, w, e)
        J = trace.error_norm[-1]
        if callback is not None:
            callback(k + 1, g, e, J)
        if J0 is None:
            J0 = J
            if config.check_condition:
                trace.condition = check_convergence_condition(
                    models, g, measurements.positions, config.fd_step, config.fd_scale)
                log.info("convergence condition at first iterate: pd=%s min_eig=%.3e",
                         trace.condition.is_positive_definite, trace.condition.min_eigenvalue)
        if J <= config.tol:
            trace.status = CONVERGED
            break
        if not np.isfinite(J) or J > DIVERGENCE_FACTOR * J0:
            trace.status = DIVERGED
            break
        w = w_next
    log.debug("mbsa finished: %s after %d iterations, J=%.3e", trace.status, len(trace), trace.error_norm[-1])
    return trace


def fd_jacobian(fun, g, x, fd_step=1e-6, fd_scale=1.0):
    """Central-difference Jacobian with step fd_step * max(fd_scale, |g_i|)."""
    g = np.asarray(g, dtype=float)
    cols = []
    for i in range(g.size):
        h = fd_step * max(fd_scale, abs(g[i]))
        gp = g.copy()
        gm = g.copy()
        gp[i] += h
        gm[i] -= h
        cols.append((_as_vec(fun(gp, x), "model") - _as_vec(fun(gm, x), "model")) / (gp[i] - gm[i]))
    return np.column_stack(cols)


def check_convergence_condition(models: ModelPair, g_probe, x, fd_step=1e-6, fd_scale=1.0) -> ConditionReport:
    """M = J_s^T J; positive definite when the symmetric part has positive eigenvalues."""
    try:
        J = fd_jacobian(models.full_forward, g_probe, x, fd_step, fd_scale)
        Js = fd_jacobian(models.simplified_forward, g_probe, x, fd_step, fd_scale)
    except ModelDomainError:
        raise
    except (ValueError, FloatingPointError) as exc:
        raise ModelDomainError(f"model evaluation failed at probe: {exc}") from exc
    M = Js.T @ J
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    return ConditionReport(M, bool(lam[0] > 0), float(lam[0]))


def write_trace_csv(trace: IterationTrace, path):
    N = len(trace.g[0]) if trace.g else 0
    m = len(trace.omega_hat[0]) if trace.omega_hat else 0
    header = ["iter"] + [f"g_{i}" for i in range(N)] + [f"omega_hat_{j}" for j in range(m)] + ["e_norm"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for k in range(len(trace)):
            row = [str(k + 1)] + [repr(float(v)) for v in trace.g[k]]
            row += [repr(float(v)) for v in trace.omega_hat[k]] + [repr(trace.error_norm[k])]
            wr.writerow(row)


def read_trace_csv(path):
    """Returns (g, omega_hat, e_norm) arrays from a trace CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    gi = [i for i, h in enumerate(header) if h.startswith("g_")]
    wi = [i for i, h in enumerate(header) if h.startswith("omega_hat_")]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return data[:, gi], data[:, wi], data[:, -1]
