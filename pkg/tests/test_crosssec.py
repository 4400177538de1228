import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad
from scipy.special import jn_zeros

from tubelab.crosssec import (
    CrossSection,
    TransverseGrid,
    angular_coupling,
    cross_eigs,
    geometry_constants,
    parse_shape,
)


def rectangle_coupling_oracle(w, h):
    """Quadrature of |t2 d1 J - t1 d2 J|^2 for the analytic cosine ground state."""
    c = 2 / np.sqrt(w * h)
    kx, ky = np.pi / w, np.pi / h

    def integrand(y, x):
        d1 = -kx * np.sin(kx * x) * np.cos(ky * y) * c
        d2 = -ky * np.cos(kx * x) * np.sin(ky * y) * c
        return (y * d1 - x * d2) ** 2

    return dblquad(integrand, -w / 2, w / 2, -h / 2, h / 2, epsabs=1e-13, epsrel=1e-12)[0]


def test_unit_square_eigenvalues_converge():
    e = cross_eigs(CrossSection.rectangle(1, 1), 32)
    assert e.extrapolated["E1"] == pytest.approx(2 * np.pi**2, rel=1e-5)
    assert e.extrapolated["E2"] == pytest.approx(5 * np.pi**2, rel=1e-4)
    assert e.E2 > e.E1 > 0


def test_rectangle_and_disc_ground_energy():
    e = cross_eigs(CrossSection.rectangle(2, 1), 32)
    assert e.extrapolated["E1"] == pytest.approx(5 * np.pi**2 / 4, rel=1e-5)
    d = cross_eigs(CrossSection.disc(1.0), 48)
    # staircase boundary: first-order convergence, only a loose check
    assert d.extrapolated["E1"] == pytest.approx(jn_zeros(0, 1)[0] ** 2, rel=0.03)


def test_interval_section():
    e = cross_eigs(CrossSection.interval(1.0), 64)
    assert e.extrapolated["E1"] == pytest.approx(np.pi**2 / 4, rel=1e-6)
    assert e.extrapolated["E2"] == pytest.approx(np.pi**2, rel=1e-5)
    assert e.C_omega == 0.0


def test_ground_state_normalized_positive():
    for sec in (CrossSection.rectangle(2, 1), CrossSection.ellipse(1, 0.6),
                CrossSection.annulus(0.4, 1.0)):
        e = cross_eigs(sec, 24, refine=False)
        assert np.sum(e.J1**2) * e.grid.cell == pytest.approx(1, abs=1e-10)
        assert np.all(e.J1 >= 0)
        assert e.C_omega >= 0


def test_disc_annulus_coupling_zero():
    for sec in (CrossSection.disc(1.0), CrossSection.annulus(0.5, 1.0)):
        e = cross_eigs(sec, 32, refine=False)
        assert e.circular and e.C_omega <= 1e-8


def test_rectangle_coupling_matches_quadrature():
    ref = rectangle_coupling_oracle(2, 1)
    e = cross_eigs(CrossSection.rectangle(2, 1), 32, refine=False)
    assert e.C_omega == pytest.approx(ref, rel=5e-3)
    sq = rectangle_coupling_oracle(1, 1)
    errs = [abs(cross_eigs(CrossSection.rectangle(1, 1), n, refine=False).C_omega - sq)
            for n in (16, 33)]
    assert errs[1] < errs[0] / 3
    assert ref > sq


def test_uncentered_disc_is_not_circular():
    sec = CrossSection.disc(1.0, offset=(0.3, 0.0))
    a, circ = geometry_constants(sec)
    assert not circ and a == pytest.approx(1.3)
    e = cross_eigs(sec, 32, refine=False)
    assert e.C_omega > 0.05


def test_geometry_constants():
    assert geometry_constants(CrossSection.disc(1.0)) == (1.0, True)
    a, c = geometry_constants(CrossSection.rectangle(1, 1))
    assert a == pytest.approx(np.sqrt(2) / 2) and not c
    assert geometry_constants(CrossSection.annulus(0.5, 1.0)) == (1.0, True)
    assert geometry_constants(CrossSection.ellipse(2, 1))[0] == pytest.approx(2)


def test_mask_sections():
    m = 41
    x = (np.arange(m) + 0.5) / m * 2 - 1
    X, Y = np.meshgrid(x, x, indexing="xy")
    disc = X**2 + Y**2 < 1
    sec = CrossSection.mask(disc, (-1, 1, -1, 1))
    a, circ = geometry_constants(sec)
    assert circ and 1.0 <= a <= 1.0 + 2 * np.sqrt(2) / m
    square = np.ones((40, 40), bool)
    sq = CrossSection.mask(square, (-0.5, 0.5, -0.5, 0.5))
    assert not geometry_constants(sq)[1]
    shifted = CrossSection.mask(disc, (-1, 1, -1, 1), offset=(0.3, 0))
    assert not geometry_constants(shifted)[1]
    assert cross_eigs(sec, 40, refine=False).C_omega == 0.0
    two = np.zeros((8, 8), bool)
    two[:2, :2] = two[5:, 5:] = True
    with pytest.raises(ValueError):
        CrossSection.mask(two, (0, 1, 0, 1))


def test_dirichlet_monotonicity_nested_masks():
    m = 40
    full = np.ones((m, m), bool)
    inner = full.copy()
    inner[:, 30:] = False
    e_full = cross_eigs(CrossSection.mask(full, (0, 1, 0, 1)), 39, refine=False).E1
    e_in = cross_eigs(CrossSection.mask(inner, (0, 1, 0, 1)), 39, refine=False).E1
    assert e_in >= e_full


def test_rejections():
    with pytest.raises(ValueError):
        CrossSection.rectangle(0, 1)
    with pytest.raises(ValueError):
        CrossSection("hexagon", (1,))
    with pytest.raises(ValueError):
        cross_eigs(CrossSection.rectangle(1, 1), 8)


def test_parse_shape():
    assert parse_shape("rectangle:2x1") == CrossSection.rectangle(2, 1)
    assert parse_shape("disc:1@0.1,0.2") == CrossSection.disc(1, (0.1, 0.2))
    assert parse_shape("interval:1").dim == 1


def test_angular_matrix_is_skew():
    g = TransverseGrid.build(CrossSection.ellipse(1, 0.5, offset=(0.1, -0.2)), 20)
    D = g.dalpha.toarray()
    assert np.array_equal(D, -D.T)


@settings(max_examples=8, deadline=None)
@given(st.floats(0, np.pi / 2))
def test_coupling_rotation_invariance(phi):
    # a rotated rectangle as a mask at high resolution against the unrotated value
    w, h = 1.6, 1.0
    m = 200
    x = (np.arange(m) + 0.5) / m * 2.2 - 1.1
    X, Y = np.meshgrid(x, x, indexing="xy")
    c, s = np.cos(phi), np.sin(phi)
    U = c * X + s * Y
    V = -s * X + c * Y
    bitmap = (np.abs(U) < w / 2) & (np.abs(V) < h / 2)
    sec = CrossSection.mask(bitmap, (-1.1, 1.1, -1.1, 1.1))
    C_rot = cross_eigs(sec, 64, refine=False).C_omega
    ref = rectangle_coupling_oracle(w, h)
    assert C_rot == pytest.approx(ref, rel=0.12)
