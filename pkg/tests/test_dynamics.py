import numpy as np
import pytest
from scipy.integrate import quad

from bubbling.bubble import bubble_dr, compute_constants
from bubbling.bsystem import solve_heights
from bubbling.dynamics import (
    HorizonError,
    LeadingTrajectory,
    default_sigma,
    drift_constant,
    drift_vectors,
    horizon_for_growth,
    lambda_system_solve,
    mu0_dot,
    mu0_of_t,
    projection_shoot,
    shooting_bisection,
    weighted_norm,
    xi_drift,
)
from bubbling.green import BallDomain, interaction_matrix


# ---------------------------------------------------------------- mu0


def test_mu0_power_law_n5(dim5):
    assert mu0_of_t(dim5, 3.0) == pytest.approx(dim5.gamma_n / 3.0, rel=1e-15)
    assert mu0_of_t(dim5, 40.0) / mu0_of_t(dim5, 10.0) == pytest.approx(0.25, rel=1e-15)


def test_mu0_ode_identity(dim):
    n = dim.n
    t = np.array([10.0, 100.0, 1000.0])
    m = mu0_of_t(dim, t)
    rhs = -(2 * dim.c1 / ((n - 2) * dim.c2)) * m ** (n - 3)
    assert np.max(np.abs(mu0_dot(dim, t) - rhs) / np.abs(rhs)) < 1e-12
    h = 1e-5 * t
    fd = (mu0_of_t(dim, t + h) - mu0_of_t(dim, t - h)) / (2 * h)
    assert np.allclose(fd, rhs, rtol=1e-8)


def test_mu0_rejects_nonpositive_time(dim5):
    with pytest.raises(ValueError):
        mu0_of_t(dim5, 0.0)
    with pytest.raises(ValueError):
        mu0_of_t(dim5, [1.0, -1.0])


def test_sup_norm_proxy_rate_n5(dim5):
    # mu0^{-(n-2)/2} grows like t^{3/2}
    t = np.array([100.0, 1e4])
    proxy = mu0_of_t(dim5, t) ** (-1.5)
    assert np.log(proxy[1] / proxy[0]) / np.log(100.0) == pytest.approx(1.5, rel=1e-14)


# ---------------------------------------------------------------- lambda system


def _ts(t0=10.0):
    return np.geomspace(t0, 100 * t0, 25)


@pytest.mark.parametrize("j", [0, 1])
def test_homogeneous_pure_power(dim5, two_points, j):
    gm, bs = two_points
    d = np.eye(2)[j]
    ts = _ts()
    tr = lambda_system_solve(bs, dim5, 10.0, ts, d=d)
    kap = (1 + bs.sigma_bar[j]) / (dim5.n - 4)
    expect = np.outer(ts ** (-kap), bs.P.T @ d)
    assert np.allclose(tr.lam, expect, rtol=1e-13, atol=0)
    assert tr.ode_residual < 1e-10
    assert tr.rk_deviation < 1e-6
    assert np.all(np.isfinite(list(tr.norms.values())))


def test_forced_solution_against_closed_integral(dim5, two_points):
    gm, bs = two_points
    n, t0 = 5, 10.0
    sig = default_sigma(bs)
    m = n - 3 + sig
    const = np.array([1.0, 2.0])
    h = lambda s: mu0_of_t(dim5, s) ** m * const
    ts = _ts(t0)
    tr = lambda_system_solve(bs, dim5, t0, ts, d=[0.0, 0.0], h=h)
    # pure power integrand: int_{t0}^t s^{kap - m/(n-4)} ds in closed form
    kap = (1 + bs.sigma_bar) / (n - 4)
    e = kap - m / (n - 4) + 1
    Ph = bs.P @ const * dim5.gamma_n**m
    nu = ts[:, None] ** (-kap) * Ph * (ts[:, None] ** e - t0**e) / e
    assert np.allclose(tr.lam, nu @ bs.P, rtol=1e-10, atol=1e-14)
    assert tr.ode_residual < 1e-10
    assert tr.rk_deviation < 1e-6
    weighted = np.linalg.norm(tr.lam, axis=1) * ts ** ((1 + sig) / (n - 4))
    assert np.max(weighted) < 1e3
    # bounded: the weighted size levels off instead of growing with t
    assert weighted[-1] < 2 * weighted[len(ts) // 2]


def test_weighted_norm(dim5):
    t = np.array([1.0, 2.0])
    h = np.array([[3.0, 4.0], [0.0, 1.0]])
    m = mu0_of_t(dim5, t)
    assert weighted_norm(dim5, t, h, 1.0) == pytest.approx(max(5 / m[0], 1 / m[1]))


def test_sample_times_must_follow_t0(dim5, two_points):
    gm, bs = two_points
    with pytest.raises(ValueError):
        lambda_system_solve(bs, dim5, 10.0, [5.0, 20.0], d=[1.0, 0.0])


# ---------------------------------------------------------------- xi drift


def test_drift_constant_by_independent_quadrature(dim):
    n = dim.n
    c, num, den = drift_constant(dim, parts=True)
    assert np.isfinite(num) and np.isfinite(den) and den > 0
    den_ref = quad(lambda r: bubble_dr(dim, r) ** 2 * r ** (n - 1), 0, np.inf, epsrel=1e-12, limit=400)[0]
    assert den == pytest.approx(den_ref, rel=1e-9)
    # integrating p U^{p-1} U' r^n = (U^p)' r^n by parts
    assert num == pytest.approx(-n * dim.a_n / dim.omega, rel=1e-9)
    assert c == pytest.approx(num / den, rel=1e-15)


def test_xi_drift_exponent_and_rk(dim):
    n = dim.n
    dom = BallDomain(n)
    q = np.zeros((2, n))
    q[0, 0], q[1, :2] = 0.5, (-0.3, 0.4)
    gm = interaction_matrix(dom, q)
    bs = solve_heights(gm)
    t0 = 10.0
    tr = xi_drift(bs, gm, dim, t0, [t0, 4 * t0, 16 * t0])
    disp = np.linalg.norm((tr.xi - q).reshape(3, -1), axis=1)
    slopes = np.log(disp[1:] / disp[:-1]) / np.log(4)
    assert np.max(np.abs(slopes + 2 / (n - 4))) < 1e-6
    assert tr.rk_deviation < 1e-6
    # derivative is the closed-form right-hand side
    h = 1e-4 * t0
    fd = (xi_drift(bs, gm, dim, t0, [t0 + h]).xi - xi_drift(bs, gm, dim, t0, [t0 - h]).xi)[0] / (2 * h)
    assert np.allclose(fd, tr.dxi[0], rtol=1e-6, atol=1e-14)
    assert all(np.isfinite(v) for v in tr.norms.values())


def test_xi_rk_over_two_decades(dim5, two_points):
    gm, bs = two_points
    tr = xi_drift(bs, gm, dim5, 10.0, _ts())
    assert tr.rk_deviation < 1e-6


def test_centred_bubble_does_not_drift(dim):
    gm = interaction_matrix(BallDomain(dim.n), np.zeros((1, dim.n)))
    bs = solve_heights(gm)
    assert np.all(drift_vectors(bs, gm) == 0)
    tr = xi_drift(bs, gm, dim, 10.0, [10.0, 100.0])
    assert np.all(tr.xi == 0)


def test_leading_trajectory_consistency(dim5, two_points):
    gm, bs = two_points
    T = LeadingTrajectory(dim5, gm, bs, d=[1e-3, 2e-3])
    t = 50.0
    c = T(t)
    assert np.allclose(c.mu, bs.b * c.mu0 + c.lam, rtol=1e-15)
    assert np.allclose(c.xi, xi_drift(bs, gm, dim5, 10.0, [t]).xi[0], rtol=1e-14)
    h = 1e-4 * t
    assert np.allclose((T(t + h).mu - T(t - h).mu) / (2 * h), c.dmu, rtol=1e-7)
    assert np.allclose((T(t + h).xi - T(t - h).xi) / (2 * h), c.dxi, rtol=1e-7, atol=1e-14)


# ---------------------------------------------------------------- projection shooting


@pytest.fixture(scope="module")
def shoot5():
    from bubbling.linop import negative_eigenpair

    dim = compute_constants(5)
    lam0 = negative_eigenpair(dim, check_truncation=False).lambda0
    f = lambda s: s**-2.0
    T = horizon_for_growth(dim, 1.0, lam0, 1.0, 1e9)
    return dim, lam0, f, T, projection_shoot(dim, 1.0, f, 1.0, T, lam0)


def test_distinguished_value_quadrature_oracle(shoot5):
    dim, lam0, f, T, st = shoot5
    g2 = dim.gamma_n**2
    a = abs(lam0) / (3 * g2)
    # in the variable u = s^3 the weight is a plain exponential
    w = lambda u: (u ** (1 / 3)) ** 2 * f(u ** (1 / 3)) / g2 * np.exp(-a * (u - 1)) * u ** (-2 / 3) / 3
    ref = -quad(w, 1.0, np.inf, epsabs=0, epsrel=1e-13, limit=400)[0]
    assert st.e0 == pytest.approx(ref, rel=1e-9)
    assert st.a == pytest.approx(a, rel=1e-14)


def test_dichotomy(shoot5):
    dim, lam0, f, T, st = shoot5
    bound = np.max(np.abs(st.e))
    assert np.isfinite(bound) and bound <= abs(st.e0) * (1 + 1e-9)
    assert st.growth_plus >= 1e3 and st.growth_minus >= 1e3
    assert st.e_plus[-1] > 0 > st.e_minus[-1]
    rep = st.report()
    assert set(rep) == {"e0_star", "growth_factor_plus", "growth_factor_minus"}


def test_bisection_recovers_distinguished_value(shoot5):
    dim, lam0, f, T, st = shoot5
    e = shooting_bisection(dim, 1.0, f, 1.0, T, lam0, st.e0 - 1e-3, st.e0 + 1e-3)
    assert abs(e - st.e0) < 1e-8 * abs(st.e0)


def test_zero_forcing(shoot5):
    dim, lam0, _, T, _ = shoot5
    st = projection_shoot(dim, 1.0, lambda s: 0.0, 1.0, T, lam0)
    assert st.e0 == 0.0
    assert np.all(st.e == 0.0)
    assert np.all(np.diff(st.e_plus) > 0) and np.all(np.diff(st.e_minus) < 0)


def test_short_horizon_and_sign_errors(shoot5):
    dim, lam0, f, _, _ = shoot5
    with pytest.raises(HorizonError):
        projection_shoot(dim, 1.0, f, 1.0, 1.0 + 1e-6, lam0)
    with pytest.raises(ValueError):
        projection_shoot(dim, 1.0, f, 1.0, 10.0, 1.0)
    T = horizon_for_growth(dim, 1.0, lam0, 1.0, 1e3)
    with pytest.raises(ValueError):
        shooting_bisection(dim, 1.0, f, 1.0, T, lam0, 1.0, 2.0)
