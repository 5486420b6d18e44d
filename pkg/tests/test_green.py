import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_interior

from bubbling.green import (
    BallDomain,
    DegenerateConfigurationError,
    DomainError,
    fundamental,
    grad_x_green,
    grad_x_regular,
    green_ball,
    green_halfspace,
    interaction_matrix,
    is_pd_cholesky,
    regular_part,
    robin,
)

DOM = BallDomain(5)
ALPHA = DOM.alpha


def test_dimension_and_radius_validation():
    with pytest.raises(ValueError):
        BallDomain(4)
    with pytest.raises(ValueError):
        BallDomain(5, 0.0)


def test_vanishes_on_boundary():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.normal(size=5)
        x /= np.linalg.norm(x)
        y = random_interior(rng, 1, 5)[0]
        assert abs(green_ball(DOM, x, y)) < 1e-10 * fundamental(DOM, x - y)


def test_symmetry_random_pairs():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x, y = random_interior(rng, 2, 5)
        g1, g2 = green_ball(DOM, x, y), green_ball(DOM, y, x)
        assert abs(g1 - g2) <= 1e-12 * abs(g1)


def test_center_image_degenerates():
    # H(., 0) is harmonic with constant boundary data alpha, hence constant
    x = np.array([0.5, 0, 0, 0, 0])
    assert green_ball(DOM, x, np.zeros(5)) == pytest.approx(ALPHA * 7, rel=1e-14)
    rng = np.random.default_rng(3)
    for x in random_interior(rng, 10, 5):
        assert regular_part(DOM, x, np.zeros(5)) == pytest.approx(ALPHA, rel=1e-14)


def test_singular_and_outside_points():
    with pytest.raises(DomainError):
        green_ball(DOM, np.full(5, 0.1), np.full(5, 0.1))
    with pytest.raises(DomainError):
        robin(DOM, np.array([1.0, 0, 0, 0, 0]))
    with pytest.raises(DomainError):
        green_ball(DOM, np.array([1.1, 0, 0, 0, 0]), np.zeros(5))


def _laplacian(f, x, h=1e-2):
    # fourth-order central differences along each axis
    out = -30.0 * len(x) * f(x)
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        out += 16 * (f(x + e) + f(x - e)) - (f(x + 2 * e) + f(x - 2 * e))
    return out / (12 * h * h)


def test_regular_part_harmonic():
    rng = np.random.default_rng(4)
    for x, y in zip(random_interior(rng, 10, 5, 0.0, 0.6), random_interior(rng, 10, 5, 0.0, 0.6)):
        f = lambda z: regular_part(DOM, z, y)
        assert abs(_laplacian(f, x)) < 1e-4


def test_robin_values_and_boundary_blowup():
    assert robin(DOM, np.zeros(5)) == pytest.approx(ALPHA, rel=1e-15)
    e = np.eye(5)[0]
    ratios = [robin(DOM, (1 - d) * e) * d**3 for d in (0.1, 0.05, 0.025)]
    for a, b in zip(ratios[:-1], ratios[1:]):
        assert abs(b / a - 1) < 0.2
    # image expansion: H(x,x) dist^{n-2} -> alpha 2^{2-n}
    assert robin(DOM, (1 - 1e-6) * e) * 1e-18 == pytest.approx(ALPHA / 8, rel=1e-5)


def test_robin_minimal_at_center():
    rng = np.random.default_rng(5)
    h0 = robin(DOM, np.zeros(5))
    for x in random_interior(rng, 200, 5, 1e-3, 0.999):
        assert robin(DOM, x) > h0
    # radial monotonicity on a sweep
    rs = np.linspace(0, 0.99, 100)
    vals = [robin(DOM, r * np.eye(5)[2]) for r in rs]
    assert np.all(np.diff(vals) > 0)


def test_halfspace_limit_of_large_ball():
    R = 1e4
    big = BallDomain(5, R)
    shift = np.zeros(5)
    shift[-1] = -R
    x = np.array([0.2, 0.1, 0, 0, 0.5])
    y = np.array([-0.1, 0.3, 0.2, 0, 0.8])
    gb = green_ball(big, x + shift, y + shift)
    gh = green_halfspace(5, x, y)
    assert gb == pytest.approx(gh, rel=1e-3)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    x, y = random_interior(rng, 2, 5, 0.1, 0.7)
    h = 1e-6
    for fun, grad in ((regular_part, grad_x_regular), (green_ball, grad_x_green)):
        fd = np.array([(fun(DOM, x + h * e, y) - fun(DOM, x - h * e, y)) / (2 * h) for e in np.eye(5)])
        assert np.allclose(grad(DOM, x, y), fd, rtol=1e-6, atol=1e-6)
    # the gradient of H(., q) at q is half the gradient of the Robin function
    fd = np.array([(robin(DOM, x + h * e) - robin(DOM, x - h * e)) / (2 * h) for e in np.eye(5)])
    assert np.allclose(2 * grad_x_regular(DOM, x, x), fd, rtol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=5, max_size=5))
def test_single_point_always_positive_definite(q):
    gm = interaction_matrix(DOM, [q])
    assert gm.k == 1
    assert gm.is_positive_definite
    assert gm.matrix[0, 0] == robin(DOM, np.array(q))


def test_close_pair_not_positive_definite():
    q = np.zeros((2, 5))
    q[1, 0] = 1e-3
    assert not interaction_matrix(DOM, q).is_positive_definite


def test_three_near_boundary_well_separated_is_positive_definite():
    th = np.array([0, 2 * np.pi / 3, 4 * np.pi / 3])
    q = np.zeros((3, 5))
    q[:, 0], q[:, 1] = 0.95 * np.cos(th), 0.95 * np.sin(th)
    gm = interaction_matrix(DOM, q)
    assert gm.is_positive_definite
    assert is_pd_cholesky(gm.matrix)


def test_coincident_points_rejected():
    with pytest.raises(DegenerateConfigurationError):
        interaction_matrix(DOM, [[0.1, 0, 0, 0, 0], [0.1, 0, 0, 0, 0]])


def test_positivity_tests_agree_on_random_configurations():
    rng = np.random.default_rng(7)
    verdicts = []
    for _ in range(100):
        q = random_interior(rng, 2, 5)
        gm = interaction_matrix(DOM, q)
        M = gm.matrix
        assert np.max(np.abs(M - M.T)) <= 1e-12 * np.max(np.abs(M))
        assert gm.is_positive_definite == is_pd_cholesky(M)
        H1, H2 = robin(DOM, q[0]), robin(DOM, q[1])
        G = green_ball(DOM, q[0], q[1])
        assert gm.is_positive_definite == bool(H1 * H2 - G * G > 0)
        assert gm.is_positive_definite == bool(np.linalg.det(M) > 0)
        verdicts.append(gm.is_positive_definite)
    assert any(verdicts) and not all(verdicts)


def test_eigenvalues_sorted_and_serialisable():
    rng = np.random.default_rng(8)
    gm = interaction_matrix(DOM, random_interior(rng, 3, 5))
    assert np.all(np.diff(gm.eigen) >= 0)
    d = gm.to_dict()
    assert d["positive_definite"] == gm.is_positive_definite
    assert np.array_equal(np.array(d["matrix"]), gm.matrix)
