"""Compiled inner loops for the pairwise interaction sums.

All kernels evaluate the second derivative of an inverse-power pair potential
V = -C / r**n along a chosen sensing direction, without the -C*n prefactor:

    K(a, b) = ((n + 1) a**2 - b**2) / (a**2 + b**2) ** ((n + 4) / 2)

where ``a`` is the source offset along the sensing direction and ``b`` the
offset across it.  Callers multiply by -C*n.
"""
import numpy as np
from numba import njit

TRANSVERSE = 0
AXIAL = 1


@njit(cache=True)
def _pair_term(d_ax, d_tr, n, half, mi, sensing):
    r2 = d_ax * d_ax + d_tr * d_tr
    if mi > 0:
        inv = 1.0 / r2
        p = inv
        for _ in range(mi - 1):
            p *= inv
    else:
        p = r2 ** (-half)
    if sensing == AXIAL:
        num = (n + 1.0) * d_ax * d_ax - d_tr * d_tr
    else:
        num = (n + 1.0) * d_tr * d_tr - d_ax * d_ax
    return num * p


def _int_power(n):
    half = 0.5 * (n + 4.0)
    mi = int(round(half))
    if abs(half - mi) > 0.0 or mi < 1:
        mi = 0
    return half, mi


@njit(cache=True)
def _profile(bx, bz, sx, sz, sw, n, half, mi, sensing):
    out = np.zeros(bx.shape[0])
    for s in range(sx.shape[0]):
        ws = sw[s]
        dz = sz[s] - bz
        for b in range(bx.shape[0]):
            out[b] += ws * _pair_term(sx[s] - bx[b], dz, n, half, mi, sensing)
    return out


@njit(cache=True)
def _weighted(bx, bz, bw, sx, sz, sw, n, half, mi, sensing):
    tot = 0.0
    for s in range(sx.shape[0]):
        dz = sz[s] - bz
        acc = 0.0
        for b in range(bx.shape[0]):
            acc += bw[b] * _pair_term(sx[s] - bx[b], dz, n, half, mi, sensing)
        tot += sw[s] * acc
    return tot


def pair_profile(bx, bz, sx, sz, sw, n, sensing=TRANSVERSE):
    """Sum_s sw[s] * K at every beam node (bx[b], bz)."""
    half, mi = _int_power(float(n))
    return _profile(np.ascontiguousarray(bx, dtype=np.float64), float(bz),
                    np.ascontiguousarray(sx, dtype=np.float64),
                    np.ascontiguousarray(sz, dtype=np.float64),
                    np.ascontiguousarray(sw, dtype=np.float64),
                    float(n), half, mi, int(sensing))


def pair_weighted_sum(bx, bz, bw, sx, sz, sw, n, sensing=TRANSVERSE):
    """Sum_b bw[b] Sum_s sw[s] * K, fused so no profile is allocated."""
    if len(sx) == 0:
        return 0.0
    half, mi = _int_power(float(n))
    return _weighted(np.ascontiguousarray(bx, dtype=np.float64), float(bz),
                     np.ascontiguousarray(bw, dtype=np.float64),
                     np.ascontiguousarray(sx, dtype=np.float64),
                     np.ascontiguousarray(sz, dtype=np.float64),
                     np.ascontiguousarray(sw, dtype=np.float64),
                     float(n), half, mi, int(sensing))


def min_distance_to_beam(x0, x1, bz, sx, sz):
    """Smallest distance between source points and the beam segment [x0, x1] at height bz.

    Returns (distance, index of the closest source).
    """
    sx = np.asarray(sx, dtype=float)
    sz = np.asarray(sz, dtype=float)
    if sx.size == 0:
        return np.inf, -1
    cx = np.clip(sx, x0, x1)
    d = np.hypot(sx - cx, sz - bz)
    i = int(np.argmin(d))
    return float(d[i]), i
