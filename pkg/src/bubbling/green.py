"""Dirichlet Green's function of a ball by the method of images, and the
interaction matrix built from it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bubble import DimensionError, select_alpha

__all__ = [
    "DomainError",
    "DegenerateConfigurationError",
    "BallDomain",
    "GreenMatrix",
    "fundamental",
    "green_ball",
    "regular_part",
    "robin",
    "grad_x_regular",
    "grad_x_green",
    "green_halfspace",
    "interaction_matrix",
    "is_pd_cholesky",
]


class DomainError(ValueError):
    """Point outside the domain, or on a singularity."""


class DegenerateConfigurationError(ValueError):
    """Concentration points coincide."""


@dataclass(frozen=True)
class BallDomain:
    n: int
    R: float = 1.0
    alpha: float = field(init=False)

    def __post_init__(self):
        if self.n < 5:
            raise DimensionError(f"dimension n={self.n} unsupported")
        if not self.R > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "alpha", select_alpha(self.n)[0])

    def _check(self, x, strict=True):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"points must have {self.n} coordinates")
        rr = np.sqrt(np.sum(x * x, axis=-1))
        bad = rr >= self.R if strict else rr > self.R * (1 + 1e-14)
        if np.any(bad):
            raise DomainError("point outside the ball" if strict else "point outside closed ball")
        return x


def fundamental(dom: BallDomain, z):
    """Gamma(z) = alpha_n |z|^{2-n}."""
    z = np.asarray(z, dtype=float)
    return dom.alpha * np.sum(z * z, axis=-1) ** ((2 - dom.n) / 2)


def _image_sq(dom, x, y):
    # |(|y|/R)(x - R^2 y/|y|^2)|^2, written without dividing by |y|
    R = dom.R
    xx = np.sum(x * x, axis=-1)
    yy = np.sum(y * y, axis=-1)
    xy = np.sum(x * y, axis=-1)
    return xx * yy / R**2 - 2 * xy + R**2


def regular_part(dom: BallDomain, x, y):
    """H(x, y), harmonic in x with boundary values Gamma(x - y)."""
    x = dom._check(x, strict=False)
    y = dom._check(y)
    return dom.alpha * _image_sq(dom, x, y) ** ((2 - dom.n) / 2)


def green_ball(dom: BallDomain, x, y):
    """G(x, y) = Gamma(x - y) - H(x, y); x may lie on the boundary."""
    x = dom._check(x, strict=False)
    y = dom._check(y)
    d = x - y
    if np.any(np.sum(d * d, axis=-1) == 0):
        raise DomainError("G(x, y) is singular at x = y")
    return fundamental(dom, d) - regular_part(dom, x, y)


def robin(dom: BallDomain, x):
    """H(x, x) = alpha (R / (R^2 - |x|^2))^{n-2}."""
    x = dom._check(x)
    xx = np.sum(x * x, axis=-1)
    return dom.alpha * (dom.R / (dom.R**2 - xx)) ** (dom.n - 2)


def grad_x_regular(dom: BallDomain, x, y):
    """Gradient of H(., y) at x."""
    x = dom._check(x, strict=False)
    y = dom._check(y)
    n, R = dom.n, dom.R
    D = _image_sq(dom, x, y)
    yy = np.sum(y * y, axis=-1)
    dD = 2 * x * (yy / R**2)[..., None] - 2 * y
    return dom.alpha * (2 - n) / 2 * (D ** (-n / 2))[..., None] * dD


def grad_x_green(dom: BallDomain, x, y):
    """Gradient of G(., y) at x."""
    x = dom._check(x, strict=False)
    y = dom._check(y)
    d = x - y
    dd = np.sum(d * d, axis=-1)
    if np.any(dd == 0):
        raise DomainError("G(x, y) is singular at x = y")
    n = dom.n
    return dom.alpha * (2 - n) * (dd ** (-n / 2))[..., None] * d - grad_x_regular(dom, x, y)


def green_halfspace(n: int, x, y, alpha: float | None = None):
    """Dirichlet Green's function of {x_n > 0}, reflecting y across x_n = 0."""
    if alpha is None:
        alpha = select_alpha(n)[0]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ys = y.copy()
    ys[..., -1] *= -1
    d1 = np.sum((x - y) ** 2, axis=-1)
    d2 = np.sum((x - ys) ** 2, axis=-1)
    return alpha * (d1 ** ((2 - n) / 2) - d2 ** ((2 - n) / 2))


@dataclass(frozen=True)
class GreenMatrix:
    dom: BallDomain
    q: np.ndarray
    matrix: np.ndarray
    eigen: np.ndarray
    is_positive_definite: bool

    @property
    def k(self) -> int:
        return len(self.q)

    def to_dict(self) -> dict:
        return {
            "n": self.dom.n,
            "R": self.dom.R,
            "points": self.q.tolist(),
            "matrix": self.matrix.tolist(),
            "eigenvalues": self.eigen.tolist(),
            "positive_definite": bool(self.is_positive_definite),
        }


def is_pd_cholesky(M) -> bool:
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def interaction_matrix(dom: BallDomain, q) -> GreenMatrix:
    """Assemble the matrix with H(q_j, q_j) on the diagonal and -G(q_i, q_j) off it."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    dom._check(q)
    k = len(q)
    for i in range(k):
        for j in range(i + 1, k):
            if np.array_equal(q[i], q[j]):
                raise DegenerateConfigurationError(f"points {i} and {j} coincide")
    M = np.empty((k, k))
    for i in range(k):
        M[i, i] = robin(dom, q[i])
        for j in range(i + 1, k):
            M[i, j] = M[j, i] = -green_ball(dom, q[i], q[j])
    M = 0.5 * (M + M.T)
    ev = np.linalg.eigvalsh(M)
    pd = bool(ev[0] > 1e-12 * np.linalg.norm(M, 2))
    q = q.copy()
    q.setflags(write=False)
    M.setflags(write=False)
    ev.setflags(write=False)
    return GreenMatrix(dom=dom, q=q, matrix=M, eigen=ev, is_positive_definite=pd)
