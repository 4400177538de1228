import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from tubelab.crosssec import CrossSection, cross_eigs
from tubelab.curve import ArcGrid
from tubelab.mollify import MollifierSchedule, SampledFunction
from tubelab.profiles import bump, sawtooth
from tubelab.spectral import (
    FlatOperator,
    GapResult,
    GridOperator,
    SolverError,
    TubeGrid,
    assemble_3d,
    assemble_h0,
    assemble_heff,
    band_gap,
    bound_constants,
    flatten,
    lowest_eigs,
    perp_rayleigh_min,
    rate_bracket,
    renormalize,
    resolvent_difference,
    resolvent_norm_gap,
)
from tubelab.spectral.bounds import perp_coefficients
from tubelab.spectral.operators import dirichlet_stencil, heff_for
from tubelab.tube import InadmissibleGeometry, TubeSpec
from tubelab.lab import fit_rate

RECT = CrossSection.rectangle(2, 1)
STRIP = CrossSection.interval(0.5, 0.5)
PI = np.pi


def tube(k1=0.0, k2=0.0, td=0.0, eps=0.1, section=RECT, interval=(0, PI), n_data=401, **kw):
    return TubeSpec.from_profiles(k1, k2, td, interval, section, eps, n_data=n_data, **kw)


def lattice(spec, n_s, n_t=16, interval=(0, PI)):
    return TubeGrid.build(interval, spec.section, n_s, n_t)


def flat(spec, grid, mode="direct", schedule=None):
    op = assemble_3d(spec, grid, mode, schedule)
    return renormalize(flatten(op), spec.eps, grid.cross.E1)


def stencil_eigs(n, ds, m):
    return np.linalg.eigvalsh(dirichlet_stencil(n, ds).toarray())[:m]


# ---------------------------------------------------------------- flatten


def test_flatten_toy():
    K = sp.csr_matrix([[2.0, -1.0], [-1.0, 2.0]])
    op = GridOperator("1d", K, np.array([4.0, 1.0]), None)
    assert np.allclose(flatten(op).A.toarray(), [[0.5, -0.5], [-0.5, 2.0]], atol=0, rtol=1e-15)


def test_flatten_identity_weight_is_noop():
    K = sp.csr_matrix([[3.0, 1.0], [1.0, 5.0]])
    assert np.array_equal(flatten(GridOperator("1d", K, np.ones(2), None)).A.toarray(), K.toarray())


def test_flatten_matches_generalized_problem():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((30, 30))
    K = B @ B.T + 30 * np.eye(30)
    w = rng.uniform(0.2, 3.0, 30)
    A = flatten(GridOperator("1d", sp.csr_matrix(K), w, None)).A.toarray()
    oracle = sla.eigh(K, np.diag(w), eigvals_only=True)
    assert np.allclose(np.linalg.eigvalsh(A), oracle, rtol=1e-12, atol=0)


def test_flatten_rejects_nonpositive_weight():
    with pytest.raises(ValueError, match="positive"):
        flatten(GridOperator("1d", sp.eye(2, format="csr"), np.array([1.0, 0.0]), None))


def test_generalized_oracle_on_tube_lattice():
    spec = tube(k1=bump(0.8, PI), td=0.5, eps=0.15)
    grid = lattice(spec, 5)
    op = assemble_3d(spec, grid, "direct")
    A = flatten(op).A.toarray()
    oracle = sla.eigh(op.stiffness.toarray(), np.diag(op.weight), eigvals_only=True)
    w = np.linalg.eigvalsh(A)
    assert np.allclose(w, oracle, rtol=1e-12, atol=1e-12 * abs(w).max())


# ---------------------------------------------------------------- symmetry


@pytest.mark.parametrize("mode", ["direct", "mollified"])
def test_assembled_operators_bitwise_symmetric(mode):
    spec = tube(k1=bump(0.9, PI), k2=bump(0.4, PI), td=lambda s: np.cos(s), eps=0.12)
    grid = lattice(spec, 8)
    op = assemble_3d(spec, grid, mode, MollifierSchedule.two_thirds())
    K = op.stiffness
    assert (K != K.T).nnz == 0
    A = flatten(op).A
    assert (A != A.T).nnz == 0


@settings(max_examples=12, deadline=None)
@given(
    amp=st.floats(0.0, 1.5),
    twist=st.floats(-2.0, 2.0),
    eps=st.floats(0.02, 0.2),
    mode=st.sampled_from(["direct", "mollified"]),
)
def test_symmetry_property(amp, twist, eps, mode):
    spec = tube(k1=bump(amp, PI), k2=lambda s: 0.3 * amp * np.sin(s), td=twist, eps=eps,
                n_data=201)
    grid = lattice(spec, 4)
    A = flat(spec, grid, mode, MollifierSchedule.lipschitz()).A
    assert (A != A.T).nnz == 0


def test_mollified_mode_requires_schedule():
    spec = tube(k1=0.5)
    with pytest.raises(ValueError, match="schedule"):
        assemble_3d(spec, lattice(spec, 4), "mollified")


def test_inadmissible_geometry_rejected():
    spec = tube(k1=4.0, eps=0.6)
    with pytest.raises(InadmissibleGeometry):
        assemble_3d(spec, lattice(spec, 4), "direct")


# ---------------------------------------------------------------- renormalize


def test_renormalize_arithmetic():
    op = FlatOperator(sp.eye(3, format="csr") * 5.0)
    r = renormalize(op, 0.1, 19.2)
    assert np.allclose(r.A.diagonal(), 5.0 - 1920.0, rtol=1e-14)
    assert r.renorm == pytest.approx(1920.0)


def test_continuum_E1_leaves_constant_offset():
    spec = tube(eps=0.1)
    grid = lattice(spec, 12)
    op = flatten(assemble_3d(spec, grid, "direct"))
    E1_cont = PI**2 / 4 + PI**2  # rectangle 2 x 1
    disc = lowest_eigs(renormalize(op, 0.1, grid.cross.E1), 2)[0]
    cont = lowest_eigs(renormalize(op, 0.1, E1_cont), 2)[0]
    offset = (grid.cross.E1 - E1_cont) / 0.1**2
    assert np.allclose(cont - disc, offset, rtol=1e-9)
    assert abs(offset) > 1.0  # swamps the O(1) effective spectrum


# ---------------------------------------------------------------- separability


def test_straight_tube_separates():
    spec = tube(eps=0.1)
    grid = lattice(spec, 20)
    A = flat(spec, grid)
    w, v = lowest_eigs(A, 4)
    assert np.allclose(w, stencil_eigs(20, grid.ds, 4), atol=1e-9)
    assert np.allclose(np.linalg.norm(v, axis=0), 1.0)


def test_straight_tube_gap_closed_form():
    eps, lam = 0.1, -1.0
    spec = tube(eps=eps)
    grid = lattice(spec, 20)
    A = flat(spec, grid)
    H = heff_for(spec, grid)
    cr = grid.cross
    gap = resolvent_norm_gap(A, H, lam, cr.J1)
    closed = 1.0 / ((cr.E2 - cr.E1) / eps**2 + stencil_eigs(20, grid.ds, 1)[0] - lam)
    assert gap == pytest.approx(closed, rel=1e-5)
    assert band_gap(A, H, lam, cr.J1) < 1e-10


def test_power_and_lanczos_agree():
    spec = tube(k1=bump(0.8, PI), td=0.5, eps=0.15)
    grid = lattice(spec, 12)
    A, H = flat(spec, grid), heff_for(spec, grid)
    lam = -10 * spec.kappa_sup**2 - 1
    a = resolvent_norm_gap(A, H, lam, grid.cross.J1, method="lanczos")
    b = resolvent_norm_gap(A, H, lam, grid.cross.J1, method="power", rtol=1e-8)
    assert a == pytest.approx(b, rel=1e-5)


def test_gap_rejects_lambda_above_threshold():
    spec = tube(k1=1.0)
    grid = lattice(spec, 4)
    with pytest.raises(ValueError, match="below"):
        resolvent_norm_gap(flat(spec, grid), heff_for(spec, grid), -5.0, grid.cross.J1,
                           kappa_sup=1.0)


def test_identical_operators_have_zero_gap():
    g = ArcGrid(0, 1, 52)
    H = assemble_heff(0.0, 0.0, 0.0, g, "2d-strip")
    assert resolvent_norm_gap(H, H, -1.0, np.ones(1)) < 1e-14
    assert resolvent_difference(H, H, -1.0) < 1e-14


# ---------------------------------------------------------------- H_eff and H0


def test_heff_dirichlet_spectrum():
    g = ArcGrid(0, 1, 802)
    w = lowest_eigs(assemble_heff(0.0, 0.0, 0.0, g), 3, dense_limit=0)[0]
    assert np.allclose(w, (np.arange(1, 4) * PI) ** 2, rtol=2e-5)


def test_heff_constant_shifts():
    g = ArcGrid(0, 2, 60)
    base = assemble_heff(0.0, 0.0, 0.7, g).A.toarray()
    bent = assemble_heff(1.0, 0.0, 0.7, g).A.toarray()
    twisted = assemble_heff(0.0, 2.0, 0.7, g).A.toarray()
    strip = assemble_heff(0.0, 2.0, 0.7, g, "2d-strip").A.toarray()
    wb = np.linalg.eigvalsh(base)
    assert np.allclose(np.linalg.eigvalsh(bent), wb - 0.25, atol=1e-10)
    assert np.allclose(np.linalg.eigvalsh(twisted), wb + 0.7 * 4.0, atol=1e-10)
    assert np.array_equal(strip, base)


def test_h0_restricts_to_heff():
    spec = tube(k1=bump(0.6, PI), td=0.8, eps=0.1)
    grid = lattice(spec, 10)
    H = heff_for(spec, grid)
    H0 = assemble_h0(H, grid, spec.eps)
    e = grid.cross.J1 / np.linalg.norm(grid.cross.J1)
    P = sp.kron(sp.eye(grid.n_s), sp.csr_matrix(e[:, None]))
    restricted = (P.T @ H0.A @ P).toarray()
    assert np.allclose(restricted, H.A.toarray(), atol=1e-8 * abs(H0.A).max())


def test_h0_perp_band_enumeration():
    spec = tube(k1=bump(0.6, PI), eps=0.1)
    grid = lattice(spec, 10)
    H = heff_for(spec, grid)
    H0 = assemble_h0(H, grid, spec.eps)
    cr = grid.cross
    expected = (cr.E2 - cr.E1) / spec.eps**2 + np.linalg.eigvalsh(H.A.toarray())[0]
    got = perp_rayleigh_min(H0, cr.J1, shift=-1.0 - spec.kappa_sup**2)
    assert got == pytest.approx(expected, rel=1e-8)


def test_h0_equals_straight_flat_operator():
    spec = tube(eps=0.1)
    grid = lattice(spec, 10)
    A = flat(spec, grid).A
    H0 = assemble_h0(heff_for(spec, grid), grid, spec.eps).A
    assert abs(A - H0).max() <= 1e-10 * abs(A).max()


def test_h0_gap_to_heff_is_order_eps():
    pts = []
    for eps in (0.2, 0.1, 0.05):
        spec = tube(k1=bump(0.6, PI), td=0.5, eps=eps)
        grid = lattice(spec, 16)
        H = heff_for(spec, grid)
        H0 = assemble_h0(H, grid, eps)
        pts.append((eps, resolvent_norm_gap(H0, H, -5.0, grid.cross.J1)))
    assert fit_rate(pts).slope >= 0.9


# ---------------------------------------------------------------- eigen solvers


def test_lowest_eigs_trivial():
    w, v = lowest_eigs(FlatOperator(sp.diags([1.0, 2.0, 3.0], format="csr")), 2)
    assert np.allclose(w, [1.0, 2.0])
    assert np.allclose(abs(v[:2, :2]), np.eye(2))


def test_lowest_eigs_richardson_pi_squared():
    vals = []
    for n in (1000, 2001):
        op = FlatOperator(dirichlet_stencil(n, 1.0 / (n + 1)))
        vals.append(lowest_eigs(op, 1, sigma_shift=0.0, dense_limit=0)[0][0])
    assert abs((4 * vals[1] - vals[0]) / 3 - PI**2) < 1e-5


def test_lowest_eigs_bad_shift_raises():
    op = FlatOperator(dirichlet_stencil(800, 1.0 / 801))
    with pytest.raises(SolverError):
        lowest_eigs(op, 1, sigma_shift=50.0, dense_limit=0)


def test_lowest_eigs_argument_checks():
    op = FlatOperator(sp.eye(3, format="csr"))
    with pytest.raises(ValueError):
        lowest_eigs(op, 0)
    with pytest.raises(ValueError):
        lowest_eigs(op, 4)


def test_straight_perp_minimum_matches_enumeration():
    spec = tube(eps=0.1)
    grid = lattice(spec, 12)
    A = flat(spec, grid)
    cr = grid.cross
    expected = (cr.E2 - cr.E1) / 0.01 + stencil_eigs(12, grid.ds, 1)[0]
    val, vec = perp_rayleigh_min(A, cr.J1, shift=-1.0, return_vector=True)
    assert val == pytest.approx(expected, rel=1e-8)
    e = cr.J1 / np.linalg.norm(cr.J1)
    assert np.max(np.abs(vec.reshape(12, -1) @ e)) < 1e-10


# ---------------------------------------------------------------- operator inequalities


def test_mollified_lower_bound_and_coercivity():
    eps = 0.1
    spec = tube(k1=bump(1.0, PI), k2=bump(0.5, PI), td=0.5, eps=eps)
    grid = lattice(spec, 14)
    Am = flat(spec, grid, "mollified", MollifierSchedule.two_thirds())
    k = spec.kappa_sup
    lam = -10 * k**2 - 1
    assert lowest_eigs(Am, 1, sigma_shift=lam)[0][0] >= -9 * k**2 - 0.1
    cr = grid.cross
    assert perp_rayleigh_min(Am, cr.J1, shift=lam) >= 0.5 * (cr.E2 - cr.E1) / eps**2


def test_mode_gap_shrinks_with_transverse_refinement():
    # the two assemblies treat the curvature potential differently at O(dt^2)
    spec = tube(k1=bump(1.0, PI), eps=0.1, section=STRIP, n_data=2001)
    sched = MollifierSchedule.lipschitz()
    gaps = []
    for n_t in (16, 32, 64):
        grid = lattice(spec, 40, n_t)
        gaps.append(resolvent_difference(flat(spec, grid), flat(spec, grid, "mollified", sched),
                                         -11.0))
    assert gaps[0] > 3 * gaps[1] > 0
    assert gaps[1] > gaps[2]


def test_modes_agree_on_straight_tube():
    spec = tube(td=1.0, eps=0.1)
    grid = lattice(spec, 10)
    d = resolvent_difference(flat(spec, grid),
                             flat(spec, grid, "mollified", MollifierSchedule.lipschitz()), -1.0)
    assert d < 1e-10


# ---------------------------------------------------------------- bound constants and bracket


def test_bound_constants_formulas():
    eps, k, a, E1, E2 = 0.01, 0.8, 1.118, 12.3, 19.6
    c = bound_constants(eps, k, a, E1, E2)
    lam = -10 * k**2 - 1
    assert c.lam == pytest.approx(lam)
    assert c.C1 == pytest.approx(4 * a**2 / k**2)
    assert c.C2 == pytest.approx(10 * a / k)
    assert c.C3 == pytest.approx(12 * a * abs(lam) / k)
    assert 0 < c.beta < 1
    betas = np.linspace(1e-4, 1 - 1e-4, 20001)
    coefs = np.array([min(perp_coefficients(eps, a, k, E1, E2, b)) for b in betas])
    assert c.beta == pytest.approx(betas[np.argmax(coefs)], abs=1e-3)
    # the closed-form optimum is at least as good as any grid point
    assert c.C_perp <= 2 / np.sqrt(coefs.max()) * (1 + 1e-12)
    assert c.C_perp == pytest.approx(2 / np.sqrt(coefs.max()), rel=1e-4)
    d = c.to_dict()
    assert all(d[f"C{i}"] is None for i in range(4, 10))


def test_bound_constants_errors():
    with pytest.raises(ValueError, match="smallness"):
        bound_constants(0.5, 1.0, 1.0, 10.0, 20.0)
    with pytest.raises(ValueError, match="coercivity"):
        bound_constants(0.2, 1.0, 1.0, 10.0, 11.0)
    with pytest.raises(ValueError, match="below"):
        bound_constants(0.1, 1.0, 1.0, 10.0, 20.0, lam=-5.0)


def test_gap_result_validation():
    with pytest.raises(ValueError):
        GapResult(0.1, np.zeros(1), -1e-3, 0.1, {})
    with pytest.raises(ValueError):
        GapResult(0.1, np.zeros(1), 1e-3, 0.1, {"sigma_k": -0.1})
    d = GapResult(0.1, np.array([1e-3]), 1e-3, 0.2, {"eps_term": 0.1}).to_dict()
    assert d["eig_gap"] == [1e-3]


def _sampled(fn, lo, hi, n, mode="linear"):
    return SampledFunction.from_callable(fn, ArcGrid(lo, hi, n), mode)


def test_bracket_of_constant_data_is_eps():
    k1 = _sampled(lambda s: np.full_like(s, 0.7), 0, 10, 2001)
    td = _sampled(lambda s: np.full_like(s, 1.3), 0, 10, 2001)
    zero = _sampled(np.zeros_like, 0, 10, 2001)
    for eps in (0.2, 0.05):
        br = rate_bracket(eps, k1, zero, td, MollifierSchedule.lipschitz(), interior=True)
        assert br["bracket"] == pytest.approx(eps, abs=1e-12)


def test_bracket_lipschitz_is_linear():
    # bump of height 1 on [0, pi]: Lipschitz constant 1 (|d/ds (1 - cos 2s)/2| <= 1)
    k1 = _sampled(bump(1.0, PI), 0, PI, 8001)
    zero = _sampled(np.zeros_like, 0, PI, 8001)
    sched = MollifierSchedule.lipschitz()
    pts = []
    for eps in (0.1, 0.05, 0.025, 0.0125):
        br = rate_bracket(eps, k1, zero, zero, sched, interior=True)
        assert br["bracket"] <= eps * (1 + 1.0 + 1.0) + 1e-12
        pts.append((eps, br["bracket"]))
    assert fit_rate(pts).slope == pytest.approx(1.0, abs=0.05)


def test_bracket_sawtooth_one_third():
    k1 = _sampled(sawtooth(1.0, 1.0), 0, 8, 16001, "constant")
    zero = _sampled(np.zeros_like, 0, 8, 16001)
    sched = MollifierSchedule.two_thirds()
    pts = []
    for eps in (0.1, 0.05, 0.025, 0.0125):
        br = rate_bracket(eps, k1, zero, zero, sched, interior=True)
        assert br["components"]["steklov_deriv_terms"] <= 2 * eps ** (1 / 3) + 1e-12
        pts.append((eps, br["bracket"]))
    assert fit_rate(pts).slope == pytest.approx(1 / 3, abs=0.05)


def test_bracket_explicit_pieces_and_straight_case():
    k1 = _sampled(bump(1.0, PI), 0, PI, 2001)
    zero = _sampled(np.zeros_like, 0, PI, 2001)
    consts = bound_constants(0.01, 1.0, 1.118, 12.3, 19.6)
    br = rate_bracket(0.05, k1, zero, zero, MollifierSchedule.lipschitz(), consts)
    assert br["sigma_tilde_explicit"] > 0
    assert br["sigma_tilde_symbolic"] == ["C4", "C5", "C6", "C7", "C8", "C9"]
    straight = bound_constants(0.05, 0.0, 1.118, 12.3, 19.6)
    br0 = rate_bracket(0.05, zero, zero, zero, MollifierSchedule.lipschitz(), straight)
    assert br0["sigma_tilde_explicit"] is None
    with pytest.raises(ValueError):
        rate_bracket(0.0, k1, zero, zero, MollifierSchedule.lipschitz())


def test_cross_section_consistency_guard():
    cr = cross_eigs(RECT, 16, refine=False)
    with pytest.raises(ValueError, match="match"):
        TubeGrid.build((0, PI), RECT, 5, 20, cross=cr)
