import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import gamma

from mbsa import _kernels
from mbsa.beam import BeamModel, mode_shape, phi_bar
from mbsa.solver import ModelDomainError
from mbsa.topography import Contour, PARALLEL, PERPENDICULAR
from mbsa.vdw import (AXIAL, KJ_PER_MOL, NM, TRANSVERSE, ContourForward, GapError, InteractionConstants,
                      InversionDomainError, LJMaterial, Placement, SimplifiedContext, lj_constants,
                      load_materials, mix_constants, simplified_forward, simplified_invert, stiffness_profile,
                      wall_kernel)

C, N_EXP = 1e-60, 6.0
CONST = InteractionConstants(C, N_EXP)


def test_materials_and_mixing():
    mats = load_materials()
    assert {"gold", "silicon"} <= set(mats)
    m = mix_constants(mats["gold"], mats["silicon"])
    assert m.sigma == pytest.approx(0.5 * (0.293373 + 0.392))
    assert m.epsilon == pytest.approx(np.sqrt(0.163176 * 2.51040))
    with pytest.raises(ValueError):
        LJMaterial(-1.0, 1.0)


def test_lj_constants_units():
    m = LJMaterial(0.3, 2.0)
    consts, conv = lj_constants(m, 2e9, 3e9)
    eps = 2.0e3 / 6.02214076e23
    assert KJ_PER_MOL == pytest.approx(1e3 / 6.02214076e23, rel=1e-12)
    assert consts.C == pytest.approx(4 * eps * (0.3e-9) ** 6 * 6e18, rel=1e-12)
    assert consts.n == 6.0 and conv["C_SI"] == consts.C


@pytest.mark.parametrize("n", [3.0, 3.356380, 6.0])
def test_single_source_limits(n):
    # along the sensing axis: (n+1)/a^(n+2); across it: -1/b^(n+2)
    bx, bw = np.array([0.0]), np.array([1.0])
    a = 1.7
    along = _kernels.pair_weighted_sum(bx, 0.0, bw, np.array([a]), np.array([0.0]), np.ones(1), n, _kernels.AXIAL)
    assert along == pytest.approx((n + 1) / a ** (n + 2), rel=1e-12)
    across = _kernels.pair_weighted_sum(bx, 0.0, bw, np.array([0.0]), np.array([a]), np.ones(1), n, _kernels.AXIAL)
    assert across == pytest.approx(-1 / a ** (n + 2), rel=1e-12)
    tr = _kernels.pair_weighted_sum(bx, 0.0, bw, np.array([0.0]), np.array([a]), np.ones(1), n,
                                    _kernels.TRANSVERSE)
    assert tr == pytest.approx((n + 1) / a ** (n + 2), rel=1e-12)


def test_kernel_integer_fast_path_matches_general():
    rng = np.random.default_rng(1)
    sx, sz = rng.uniform(1, 3, 20), rng.uniform(-2, 2, 20)
    w = rng.uniform(0.1, 1, 20)
    bx = np.linspace(-1, 0, 9)
    bw = np.ones(9)
    for sensing in (_kernels.AXIAL, _kernels.TRANSVERSE):
        a = _kernels.pair_weighted_sum(bx, 0.0, bw, sx, sz, w, 6.0, sensing)
        b = _kernels.pair_weighted_sum(bx, 0.0, bw, sx, sz, w, 6.0 + 1e-13, sensing)
        assert a == pytest.approx(b, rel=1e-9)


def column(gap, length):
    """Straight wall along the beam axis, starting ``gap`` beyond the tip at the origin."""
    return Contour.from_points([[gap, 0.0], [gap + length, 0.0]])


def test_column_wall_tip_kernel(fiber):
    g = 1 * NM
    prof = stiffness_profile(column(g, 100 * g), CONST, Placement(0.0, 0.0, AXIAL), fiber, g / 8, 512)
    assert prof.k[-1] == pytest.approx(wall_kernel(C, N_EXP, g), rel=1e-2)


def test_column_wall_profile_closed_form(fiber):
    g, Lw = 1 * NM, 100 * NM
    L = fiber.length
    prof = stiffness_profile(column(g, Lw), CONST, Placement(0.0, 0.0, AXIAL), fiber, g / 32, 2048)
    a0 = g + L - prof.x
    ref = -C * N_EXP * (a0 ** -(N_EXP + 1) - (a0 + Lw) ** -(N_EXP + 1))
    np.testing.assert_allclose(prof.k, ref, rtol=1e-4)


def test_wall_across_beam_closed_form(fiber):
    # integrating the kernel across the sensing axis gives n B a^-(n+1)
    n = N_EXP
    nB = n * np.sqrt(np.pi) * gamma((n + 1) / 2) / gamma(n / 2 + 1)
    oracle = quad(lambda b: ((n + 1) - b * b) / (1 + b * b) ** ((n + 4) / 2), -np.inf, np.inf)[0]
    assert nB == pytest.approx(oracle, rel=1e-10)
    g = 1 * NM
    wall = Contour.from_points([[g, -200 * g], [g, 200 * g]])
    prof = stiffness_profile(wall, CONST, Placement(0.0, 0.0, AXIAL), fiber, g / 32, 512)
    assert prof.k[-1] == pytest.approx(-C * n * nB * g ** -(n + 1), rel=1e-4)


def test_wall_alongside_beam_is_uniform(fiber):
    # a long wall beside the whole beam gives k = -C n nB g^-(n+1) everywhere, so Delta omega^2 = k/rho A
    n = N_EXP
    nB = n * np.sqrt(np.pi) * gamma((n + 1) / 2) / gamma(n / 2 + 1)
    g = 1 * NM
    L = fiber.length
    wall = Contour.from_points([[-L - 100 * g, -g], [100 * g, -g]])
    eng = ContourForward(fiber, CONST, [Placement(0.0, 0.0, TRANSVERSE)], 512, g / 16)
    k0 = -C * n * nB * g ** -(n + 1)
    assert eng(wall)[0] == pytest.approx(k0 / fiber.rho_A, rel=1e-4)


def test_translation_invariance(fiber):
    c = Contour.from_points([[1 * NM, -3 * NM], [1.2 * NM, 0], [0.9 * NM, 4 * NM]])
    p = [Placement(0.0, 0.0, AXIAL), Placement(0.0, 1 * NM, AXIAL)]
    a = ContourForward(fiber, CONST, p, 256, 0.1 * NM)(c)
    d = np.array([3 * NM, -7 * NM])
    c2 = Contour.from_points(c.points + d)
    p2 = [Placement(q.tip + d[0], q.beam_z + d[1], q.sensing) for q in p]
    b = ContourForward(fiber, CONST, p2, 256, 0.1 * NM)(c2)
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_linear_in_C_and_additive(fiber):
    pts = np.array([[1 * NM, -3 * NM], [1 * NM, 0], [2 * NM, 0], [2 * NM, 3 * NM]])
    p = [Placement(0.0, z, AXIAL) for z in (-1 * NM, 0.0, 1 * NM)]
    e1 = ContourForward(fiber, CONST, p, 256, 0.1 * NM)
    e2 = ContourForward(fiber, InteractionConstants(3 * C, N_EXP), p, 256, 0.1 * NM)
    whole = Contour.from_points(pts)
    np.testing.assert_allclose(e2(whole), 3 * e1(whole), rtol=1e-12)
    a, b = Contour.from_points(pts[:2]), Contour.from_points(pts[1:])
    np.testing.assert_allclose(e1.raw_sums(a) + e1.raw_sums(b), e1.raw_sums(whole), rtol=1e-12)
    e1.set_fixed(a)
    np.testing.assert_allclose(e1(b), e1.scale() * e1.raw_sums(whole), rtol=1e-12)


def test_attractive_wall_lowers_frequency(fiber):
    eng = ContourForward(fiber, CONST, [Placement(0.0, 0.0, AXIAL)], 256, 0.1 * NM)
    assert eng(Contour.from_points([[1 * NM, -5 * NM], [1 * NM, 5 * NM]]))[0] < 0


def test_gap_floor(fiber):
    eng = ContourForward(fiber, CONST, [Placement(0.0, 5 * NM, AXIAL), Placement(0.0, 0.0, AXIAL)], 64, 0.1 * NM,
                         gap_floor=0.2 * NM)
    with pytest.raises(GapError) as ei:
        eng(Contour.from_points([[-3 * NM, 0.1 * NM], [-3 * NM, 1 * NM]]))
    assert ei.value.index == 1


def ctx(d=2.0):
    return SimplifiedContext(C=2.0, n=6.0, L_top=16.0, N=8, phi_bar=0.25, rho_A=3.0, L_beam=10.0, d=d)


def test_simplified_perpendicular_formula():
    c = ctx()
    g = np.array([11.0, 12.0])
    expect = -(16.0 / 8) * (2.0 / 7.0) / (0.25 * 3.0) / (g - 10.0) ** 6
    np.testing.assert_allclose(simplified_forward(g, PERPENDICULAR, c), expect, rtol=1e-14)


def test_simplified_parallel_formula():
    c = ctx(np.array([1.0, 3.0]))
    g = np.array([0.5, 2.0])
    expect = -2.0 * 16.0 * np.array([1.0, 3.0]) / (8 * 0.25) / g ** 6
    np.testing.assert_allclose(simplified_forward(g, PARALLEL, c), expect, rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(gap=st.floats(1e-3, 1e3), orient=st.sampled_from([PERPENDICULAR, PARALLEL]))
def test_simplified_round_trip(gap, orient):
    c = ctx()
    g = np.array([gap + (c.L_beam if orient == PERPENDICULAR else 0.0)])
    w = simplified_forward(g, orient, c)
    np.testing.assert_allclose(simplified_invert(w, orient, c), g, rtol=1e-10)


def test_simplified_domain_errors():
    c = ctx()
    with pytest.raises(InversionDomainError) as ei:
        simplified_invert(np.array([-1.0, -2.0, 0.0]), PERPENDICULAR, c)
    assert ei.value.index == 2
    with pytest.raises(ModelDomainError) as ei:
        simplified_forward(np.array([11.0, 9.0]), PERPENDICULAR, c)
    assert ei.value.index == 1
    with pytest.raises(ModelDomainError):
        simplified_forward(np.array([1.0]), PARALLEL, ctx(0.0))


def test_full_to_simplified_ratio_constant_at_small_gaps(fiber):
    """The simplified perpendicular model has the right gap law once the gap is small."""
    L = fiber.length
    W = 2 * NM
    ratios = []
    for frac in (1e-3, 3e-3, 1e-2):
        g = frac * L
        wall = Contour.from_points([[g, -W / 2], [g, W / 2]])
        intervals = int(2 ** np.ceil(np.log2(16 * L / g)))
        full = ContourForward(fiber, CONST, [Placement(0.0, 0.0, AXIAL)], intervals, g / 8)(wall)[0]
        c = SimplifiedContext(1.0, N_EXP, W, 1, phi_bar(fiber), fiber.rho_A, L)
        ratios.append(full / simplified_forward(np.array([L + g]), PERPENDICULAR, c)[0])
    ratios = np.array(ratios)
    assert np.all(ratios > 0)
    assert np.ptp(ratios) / np.mean(ratios) < 0.05
