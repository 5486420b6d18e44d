import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import beta

from bubbling.bubble import (
    DimensionError,
    RadialField,
    RadialGrid,
    Z_radial,
    alpha_candidates,
    bubble_dr,
    bubble_profile,
    compute_constants,
    energy,
    integrate_halfline,
    kernel_Z,
    potential,
    select_alpha,
    sinh_grid,
    sphere_area,
)


def _halfline_beta(a, m):
    """int_0^inf r^{a-1} (1+r^2)^{-m} dr."""
    return 0.5 * beta(a / 2, m - a / 2)


# ---------------------------------------------------------------- amplitude


def test_alpha5_value_and_convention():
    alpha, label = select_alpha(5)
    assert alpha == pytest.approx(15 ** 0.75, rel=1e-14)
    assert label == "(n(n-2))^((n-2)/4)"


@pytest.mark.parametrize("n", [5, 6, 7, 8])
def test_selected_alpha_solves_pde_on_grid(n):
    # independent arbiter: finite-difference Laplacian on a graded grid
    g = sinh_grid(n, 1e3, 400, scale=1.0, stencil=13)
    r = g.nodes
    res = {}
    for label, a in alpha_candidates(n).items():
        U = a * (1 + r * r) ** (-(n - 2) / 2)
        res[label] = np.max(np.abs(g.laplacian(U) + U ** ((n + 2) / (n - 2)))[1:-1])
    alpha, label = select_alpha(n)
    assert res[label] < 1e-8
    other = [v for k, v in res.items() if k != label]
    if n != 6:  # both conventions coincide for n = 6
        assert min(other) > 1e-2


def test_profile_tail_and_unit_radius(dim):
    n, a = dim.n, dim.alpha_n
    assert bubble_profile(dim, 1.0) == pytest.approx(a * 2 ** (-(n - 2) / 2), rel=1e-15)
    r = 1e5
    assert r ** (n - 2) * bubble_profile(dim, r) == pytest.approx(a, rel=1e-9)


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_profile_positive_decreasing(r1, r2):
    lo, hi = sorted((r1, r2))
    u_lo, u_hi = bubble_profile(5, lo), bubble_profile(5, hi)
    assert u_hi > 0
    assert u_hi <= u_lo


# ---------------------------------------------------------------- kernel


def test_kernel_values_at_origin(dim5):
    y0 = np.zeros(5)
    assert kernel_Z(dim5, 6, y0) == pytest.approx(1.5 * dim5.alpha_n, rel=1e-15)
    assert kernel_Z(dim5, 1, y0) == 0.0


def test_kernel_index_range(dim5):
    with pytest.raises(IndexError):
        kernel_Z(dim5, 0, np.zeros(5))
    with pytest.raises(IndexError):
        kernel_Z(dim5, 7, np.zeros(5))


def test_Zn1_single_sign_change(dim):
    r = np.linspace(0, 50, 20001)
    sg = np.sign(Z_radial(dim, r))
    sg = sg[sg != 0]
    assert np.count_nonzero(np.diff(sg)) == 1
    root = brentq(lambda s: float(Z_radial(dim, s)), 0.1, 10.0, xtol=1e-15)
    assert root == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.integers(1, 5))
def test_kernel_matches_derivatives_of_bubble(y, i):
    dim = compute_constants(5)
    y = np.array(y)
    U = lambda z: bubble_profile(dim, np.linalg.norm(z))
    h = 1e-5
    e = np.zeros(5)
    e[i - 1] = h
    fd = (U(y + e) - U(y - e)) / (2 * h)
    assert kernel_Z(dim, i, y) == pytest.approx(fd, abs=1e-8)
    # Z_{n+1} is the scaling derivative d/dmu of mu^{-(n-2)/2} U(y/mu) at mu = 1, sign flipped
    Um = lambda m: m ** (-1.5) * U(y / m)
    fd_mu = -(Um(1 + h) - Um(1 - h)) / (2 * h)
    assert kernel_Z(dim, 6, y) == pytest.approx(fd_mu, abs=1e-8)


@pytest.mark.parametrize("index", [1, 2, 3, 4, 5, 6])
def test_kernel_in_L0_kernel(dim5, index):
    from bubbling.linop import kernel_residual

    g = sinh_grid(5, 1e3, 400, scale=1.0, stencil=13)
    assert np.max(np.abs(kernel_residual(dim5, g, index))) < 1e-6


# ---------------------------------------------------------------- constants


def test_p_and_rejections():
    assert compute_constants(5).p == pytest.approx(7 / 3, rel=1e-15)
    for n in (2, 3, 4):
        with pytest.raises(DimensionError):
            compute_constants(n)


def test_constants_against_beta_function_oracle(dim):
    n, a, om = dim.n, dim.alpha_n, sphere_area(dim.n)
    p = (n + 2) / (n - 2)
    a_n = om * a**p * _halfline_beta(n, (n + 2) / 2)
    assert dim.a_n == pytest.approx(a_n, rel=1e-10)
    # (1 - r^2)^2 = 1 - 2 r^2 + r^4 splits c2 into three beta integrals
    k = om * (a * (n - 2) / 2) ** 2
    c2 = k * (_halfline_beta(n, n) - 2 * _halfline_beta(n + 2, n) + _halfline_beta(n + 4, n))
    assert dim.c2 == pytest.approx(c2, rel=1e-10)
    S = om / n * a ** (2 * n / (n - 2)) * _halfline_beta(n, n)
    assert dim.S_n == pytest.approx(S, rel=1e-10)
    assert dim.c1 == pytest.approx((n - 2) / 2 * a_n, rel=1e-10)


def test_c1_two_formulas(dim):
    assert abs(dim.c1 - dim.c1_alt) <= 1e-8 * dim.c1
    assert dim.c1 > 0 and dim.c2 > 0 and dim.gamma_n > 0


def test_mu0_identity_n5(dim5):
    # d/dt (gamma/t) = -(2 c1/((n-2) c2)) (gamma/t)^2 for every t
    g, c1, c2 = dim5.gamma_n, dim5.c1, dim5.c2
    assert g == pytest.approx(3 * c2 / (2 * c1), rel=1e-14)
    for t in (0.5, 3.0, 70.0):
        lhs = -g / t**2
        rhs = -(2 * c1 / (3 * c2)) * (g / t) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-14)


def test_c2_diverges_logarithmically_for_n4():
    n = 4
    a = 8 ** 0.5

    def trunc(R):
        f = lambda r: (a * (n - 2) / 2 * (1 - r * r) * (1 + r * r) ** (-n / 2)) ** 2 * r ** (n - 1)
        return quad(f, 0, R, limit=400, epsabs=0, epsrel=1e-12)[0]

    v = [trunc(R) for R in (1e2, 1e3, 1e4)]
    d1, d2 = v[1] - v[0], v[2] - v[1]
    assert d1 > 0 and d2 == pytest.approx(d1, rel=1e-3)


def test_halfline_quadrature_oracle():
    assert integrate_halfline(lambda r: np.exp(-r)) == pytest.approx(1.0, rel=1e-12)
    assert integrate_halfline(lambda r: 1 / (1 + r * r)) == pytest.approx(np.pi / 2, rel=1e-10)


# ---------------------------------------------------------------- grids and energy


@pytest.mark.parametrize("n", [5, 7])
def test_grid_volume(n):
    g = sinh_grid(n, 37.0, 300, scale=0.7)
    assert g.integrate(np.ones(len(g))) == pytest.approx(37.0**n / n, rel=1e-10)


def test_grid_and_field_validation():
    with pytest.raises(ValueError):
        RadialGrid([0, 1, 0.5, 2, 3, 4, 5, 6], 5)
    g = sinh_grid(5, 10.0, 64)
    with pytest.raises(ValueError):
        RadialField(g, np.ones(63))
    with pytest.raises(ValueError):
        RadialField(g, np.full(64, np.nan))


def test_energy_of_bubble_family(dim):
    n = dim.n
    g = sinh_grid(n, 1e5, 800, scale=1.0, stencil=13)
    E = {}
    for mu in (1.0, 0.25, 0.5, 2.0, 4.0):
        E[mu] = energy(dim, RadialField(g, mu ** (-(n - 2) / 2) * bubble_profile(dim, g.nodes / mu)))
    assert E[1.0] == pytest.approx(dim.S_n, rel=1e-6)
    for mu in (0.25, 0.5, 2.0, 4.0):
        assert abs(E[mu] - E[1.0]) / E[1.0] < 1e-6


def test_energy_zero_and_homogeneity(dim5):
    g = sinh_grid(5, 1e3, 400, scale=1.0, stencil=13)
    assert energy(dim5, RadialField(g, np.zeros(len(g)))) == 0.0
    u = bubble_profile(dim5, g.nodes)
    du, _ = g.derivatives(u)
    kin = dim5.omega * g.integrate(du * du)
    pot = dim5.omega * g.integrate(u ** (10 / 3))
    e2 = energy(dim5, RadialField(g, 2 * u))
    assert e2 == pytest.approx(2 * kin - 0.3 * 2 ** (10 / 3) * pot, rel=1e-12)
    assert e2 < energy(dim5, RadialField(g, u))


def test_energy_refuses_coarse_grid(dim5):
    g = sinh_grid(5, 10.0, 40)
    with pytest.raises(ValueError):
        energy(dim5, RadialField(g, bubble_profile(dim5, g.nodes)))


def test_bubble_dr_matches_finite_difference(dim):
    r = np.linspace(0.1, 20, 50)
    h = 1e-6
    fd = (bubble_profile(dim, r + h) - bubble_profile(dim, r - h)) / (2 * h)
    assert np.allclose(bubble_dr(dim, r), fd, rtol=1e-7, atol=1e-12)
    assert np.allclose(potential(dim, r), dim.p * bubble_profile(dim, r) ** (dim.p - 1), rtol=1e-12)
