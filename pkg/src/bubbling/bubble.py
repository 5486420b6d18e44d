"""Dimensional constants, the Talenti bubble, its kernel and radial quadrature.

Every radial integral in the package goes through either ``integrate_halfline``
(adaptive Gauss-Legendre on a compactified half line) or a ``RadialGrid``
(interpolatory weights and high-order finite differences on a graded mesh).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gamma as _gamma_fn
from math import pi

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import sparse

__all__ = [
    "DimensionError",
    "Dim",
    "RadialGrid",
    "RadialField",
    "sphere_area",
    "alpha_candidates",
    "select_alpha",
    "integrate_halfline",
    "compute_constants",
    "bubble_profile",
    "bubble_dr",
    "bubble_drr",
    "Z_radial",
    "Z_radial_dr",
    "kernel_Z",
    "potential",
    "sinh_grid",
    "geometric_grid",
    "fornberg_weights",
    "energy",
]


class DimensionError(ValueError):
    """Raised for dimensions outside n >= 5."""


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2.0 * pi ** (n / 2) / _gamma_fn(n / 2)


def alpha_candidates(n: int) -> dict[str, float]:
    """The two amplitude normalisations in circulation for the bubble."""
    base = float(n * (n - 2))
    return {
        "(n(n-2))^((n-2)/4)": base ** ((n - 2) / 4),
        "(n(n-2))^(1/(n-2))": base ** (1.0 / (n - 2)),
    }


def _residual_for_alpha(n: int, alpha: float) -> float:
    # Closed-form Laplacian of alpha (1+r^2)^{-(n-2)/2} is
    # -alpha n (n-2) (1+r^2)^{-(n+2)/2}, so the residual is a single scalar
    # times (1+r^2)^{-(n+2)/2}. Sample it to keep the check honest.
    p = (n + 2) / (n - 2)
    r = np.linspace(0.0, 5.0, 51)
    w = (1 + r * r) ** (-(n + 2) / 2)
    lap = -alpha * n * (n - 2) * w
    return float(np.max(np.abs(lap + (alpha * (1 + r * r) ** (-(n - 2) / 2)) ** p)))


def select_alpha(n: int) -> tuple[float, str]:
    """Pick the amplitude for which Delta U + U^p vanishes; return (alpha, label)."""
    best = min(alpha_candidates(n).items(), key=lambda kv: _residual_for_alpha(n, kv[1]))
    return best[1], best[0]


# ---------------------------------------------------------------- quadrature


@lru_cache(maxsize=None)
def _gl(m: int):
    x, w = leggauss(m)
    return x, w


def integrate_halfline(f, tol: float = 1e-10, order: int = 16, start_panels: int = 8,
                       max_panels: int = 1 << 14) -> float:
    """Integrate f over [0, inf) via r = s/(1-s) and composite Gauss-Legendre.

    The panel count doubles until two successive values agree to ``tol``
    (relative, with an absolute floor of ``tol`` times the largest magnitude seen).
    ``f`` must accept numpy arrays.
    """
    x, w = _gl(order)

    def composite(m):
        edges = np.linspace(0.0, 1.0, m + 1)
        h = np.diff(edges)
        s = (edges[:-1, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
        ws = (0.5 * h[:, None] * w[None, :]).ravel()
        r = s / (1.0 - s)
        jac = 1.0 / (1.0 - s) ** 2
        return float(np.sum(ws * jac * f(r)))

    m = start_panels
    prev = composite(m)
    while m < max_panels:
        m *= 2
        cur = composite(m)
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise ArithmeticError("half-line quadrature did not converge")


# ---------------------------------------------------------------- profiles


def bubble_profile(dim: "Dim | int", r):
    """U(r) = alpha_n (1 + r^2)^{-(n-2)/2}."""
    n, alpha = _n_alpha(dim)
    r = np.asarray(r, dtype=float)
    return alpha * (1.0 + r * r) ** (-(n - 2) / 2)


def bubble_dr(dim, r):
    n, alpha = _n_alpha(dim)
    r = np.asarray(r, dtype=float)
    return -alpha * (n - 2) * r * (1.0 + r * r) ** (-n / 2)


def bubble_drr(dim, r):
    n, alpha = _n_alpha(dim)
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return -alpha * (n - 2) * (q ** (-n / 2) - n * r * r * q ** (-n / 2 - 1))


def Z_radial(dim, r):
    """Z_{n+1}(r) = (n-2)/2 U + r U'; vanishes only at r = 1."""
    n, alpha = _n_alpha(dim)
    r = np.asarray(r, dtype=float)
    return alpha * (n - 2) / 2 * (1.0 - r * r) * (1.0 + r * r) ** (-n / 2)


def Z_radial_dr(dim, r):
    n, alpha = _n_alpha(dim)
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return alpha * (n - 2) / 2 * (-2 * r * q ** (-n / 2) - n * r * (1 - r * r) * q ** (-n / 2 - 1))


def potential(dim, r):
    """p U^{p-1} = n(n+2)/(1+r^2)^2."""
    n = dim if isinstance(dim, int) else dim.n
    r = np.asarray(r, dtype=float)
    return n * (n + 2) / (1.0 + r * r) ** 2


def kernel_Z(dim, index: int, y):
    """Kernel element Z_index at the point y in R^n (1-based index)."""
    n, _ = _n_alpha(dim)
    if not 1 <= index <= n + 1:
        raise IndexError(f"kernel index must lie in 1..{n + 1}, got {index}")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != n:
        raise ValueError(f"point must have {n} coordinates")
    r = np.sqrt(np.sum(y * y, axis=-1))
    if index == n + 1:
        return Z_radial(dim, r)
    # dU/dy_i = U'(r) y_i / r = -alpha (n-2) y_i (1+r^2)^{-n/2}
    _, alpha = _n_alpha(dim)
    return -alpha * (n - 2) * y[..., index - 1] * (1.0 + r * r) ** (-n / 2)


def _n_alpha(dim):
    if isinstance(dim, Dim):
        return dim.n, dim.alpha_n
    n = int(dim)
    return n, select_alpha(n)[0]


# ---------------------------------------------------------------- constants


@dataclass(frozen=True)
class Dim:
    n: int
    p: float
    alpha_n: float
    a_n: float
    c1: float
    c2: float
    gamma_n: float
    S_n: float
    alpha_convention: str
    c1_alt: float
    omega: float

    def __post_init__(self):
        if self.n < 5:
            raise DimensionError(f"dimension n={self.n} unsupported: need n >= 5")
        if not (self.c1 > 0 and self.c2 > 0 and self.gamma_n > 0):
            raise ArithmeticError("constants must be positive")

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "alpha_n": self.alpha_n,
            "a_n": self.a_n,
            "c1": self.c1,
            "c2": self.c2,
            "gamma_n": self.gamma_n,
            "S_n": self.S_n,
            "alpha_convention": self.alpha_convention,
        }


@lru_cache(maxsize=None)
def compute_constants(n: int) -> Dim:
    """All derived constants for dimension n via adaptive half-line quadrature."""
    if int(n) != n or n < 5:
        raise DimensionError(f"dimension n={n} unsupported: need n >= 5")
    n = int(n)
    p = (n + 2) / (n - 2)
    alpha, label = select_alpha(n)
    om = sphere_area(n)

    def U(r):
        return alpha * (1 + r * r) ** (-(n - 2) / 2)

    def Z(r):
        return alpha * (n - 2) / 2 * (1 - r * r) * (1 + r * r) ** (-n / 2)

    a_n = om * integrate_halfline(lambda r: U(r) ** p * r ** (n - 1))
    c1 = (n - 2) / 2 * a_n
    c1_alt = -p * om * integrate_halfline(lambda r: U(r) ** (p - 1) * Z(r) * r ** (n - 1))
    c2 = om * integrate_halfline(lambda r: Z(r) ** 2 * r ** (n - 1))
    S_n = om / n * integrate_halfline(lambda r: U(r) ** (p + 1) * r ** (n - 1))
    gamma_n = ((n - 2) * c2 / (2 * (n - 4) * c1)) ** (1.0 / (n - 4))
    if abs(c1 - c1_alt) > 1e-8 * abs(c1):
        raise ArithmeticError(f"c1 formulas disagree: {c1} vs {c1_alt}")
    return Dim(n=n, p=p, alpha_n=alpha, a_n=a_n, c1=c1, c2=c2, gamma_n=gamma_n,
               S_n=S_n, alpha_convention=label, c1_alt=c1_alt, omega=om)


# ---------------------------------------------------------------- grids


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights at z for derivatives 0..m on nodes x.

    Returns an array of shape (m+1, len(x)).
    """
    x = np.asarray(x, dtype=float)
    N = len(x)
    c = np.zeros((m + 1, N))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, N):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


class RadialGrid:
    """Strictly increasing radii with weights for int_0^R f(r) r^{n-1} dr.

    Weights integrate the local degree-7 interpolant of f times r^{n-1}
    exactly, so constants and low-degree polynomials integrate to roundoff.
    """

    __slots__ = ("_nodes", "_weights", "_n", "_cache")

    def __init__(self, nodes, n: int, stencil: int = 9):
        nodes = np.array(nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 8:
            raise ValueError("grid needs at least 8 nodes")
        if np.any(np.diff(nodes) <= 0) or nodes[0] < 0:
            raise ValueError("nodes must be nonnegative and strictly increasing")
        if n < 5:
            raise DimensionError(f"dimension n={n} unsupported")
        nodes.setflags(write=False)
        self._nodes = nodes
        self._n = int(n)
        self._cache = {"stencil": int(stencil)}
        w = _interp_weights(nodes, self._n)
        w.setflags(write=False)
        self._weights = w

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def n(self) -> int:
        return self._n

    def __len__(self):
        return len(self._nodes)

    @property
    def r_max(self) -> float:
        return float(self._nodes[-1])

    def integrate(self, values) -> float:
        """int_0^{r_max} f r^{n-1} dr (no sphere factor)."""
        return float(np.dot(self._weights, values))

    def diff_matrices(self, parity: int = 1):
        """Sparse first and second derivative matrices.

        ``parity`` is +1 for even functions of r, -1 for odd ones; the
        mirrored ghost nodes across r = 0 are folded back with that sign.
        ``parity=0`` uses one-sided stencils at the inner end instead
        (for grids that stop short of a singular origin).
        """
        key = ("D", parity)
        if key not in self._cache:
            self._cache[key] = _diff_matrices(self._nodes, parity, self._cache["stencil"])
        return self._cache[key]

    def derivatives(self, values, parity: int = 1):
        D1, D2 = self.diff_matrices(parity)
        v = np.asarray(values, dtype=float)
        return D1 @ v, D2 @ v

    def laplacian(self, values, parity: int = 1, ell: int = 0):
        """Radial part of Delta acting on the mode-ell component.

        u'' + (n-1)/r u' - ell(ell+n-2)/r^2 u; at r = 0 the even-mode limit
        n u''(0) is used and odd modes return 0.
        """
        d1, d2 = self.derivatives(values, parity)
        r = self._nodes
        out = np.empty_like(d2)
        pos = r > 0
        lam = ell * (ell + self._n - 2)
        v = np.asarray(values, dtype=float)
        out[pos] = d2[pos] + (self._n - 1) / r[pos] * d1[pos] - lam / r[pos] ** 2 * v[pos]
        if not np.all(pos):
            out[~pos] = self._n * d2[~pos] if ell == 0 else 0.0
        return out


def _interp_weights(nodes: np.ndarray, n: int, deg: int = 7) -> np.ndarray:
    N = len(nodes)
    m = deg + 1
    xg, wg = _gl(16)
    w = np.zeros(N)
    for i in range(N - 1):
        lo = min(max(i - deg // 2, 0), N - m)
        idx = np.arange(lo, lo + m)
        a, b = nodes[i], nodes[i + 1]
        h = b - a
        s = a + 0.5 * h * (xg + 1)
        ws = 0.5 * h * wg * s ** (n - 1)
        # Lagrange basis on idx evaluated at s
        xs = nodes[idx]
        L = np.ones((m, len(s)))
        for j in range(m):
            for k in range(m):
                if k != j:
                    L[j] *= (s - xs[k]) / (xs[j] - xs[k])
        w[idx] += L @ ws
    return w


def _diff_matrices(nodes: np.ndarray, parity: int, m: int):
    N = len(nodes)
    if parity == 0:
        ghost = np.empty(0)
        gmap = np.empty(0, dtype=int)
    elif nodes[0] == 0.0:
        ghost = -nodes[1:][::-1]
        gmap = np.arange(N - 1, 0, -1)
    else:
        ghost = -nodes[::-1]
        gmap = np.arange(N - 1, -1, -1)
    ext = np.concatenate([ghost, nodes])
    src = np.concatenate([gmap, np.arange(N)])
    sign = np.concatenate([np.full(len(ghost), float(parity)), np.ones(N)])
    off = len(ghost)
    rows, cols, v1, v2 = [], [], [], []
    half = m // 2
    for i in range(N):
        c = off + i
        lo = min(max(c - half, 0), len(ext) - m)
        idx = np.arange(lo, lo + m)
        W = fornberg_weights(ext[c], ext[idx], 2)
        rows.append(np.full(m, i))
        cols.append(src[idx])
        v1.append(W[1] * sign[idx])
        v2.append(W[2] * sign[idx])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    D1 = sparse.csr_matrix((np.concatenate(v1), (rows, cols)), shape=(N, N))
    D2 = sparse.csr_matrix((np.concatenate(v2), (rows, cols)), shape=(N, N))
    return D1, D2


def sinh_grid(n: int, r_max: float, num: int, scale: float = 1.0, stencil: int = 9) -> RadialGrid:
    """Nodes r = scale*sinh(s) for uniform s: near-uniform at the origin, geometric far out."""
    s = np.linspace(0.0, np.arcsinh(r_max / scale), num)
    r = scale * np.sinh(s)
    r[-1] = r_max
    return RadialGrid(r, n, stencil=stencil)


def geometric_grid(n: int, r_min: float = 1e-3, r_max: float = 1e3, num: int = 400,
                   stencil: int = 9) -> RadialGrid:
    """Pure geometric grading r_i = r_min rho^i, with the origin prepended."""
    r = np.concatenate([[0.0], np.geomspace(r_min, r_max, num - 1)])
    return RadialGrid(r, n, stencil=stencil)


@dataclass(frozen=True)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (len(self.grid),):
            raise ValueError("values must align with grid nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: RadialGrid, f):
        return cls(grid, f(grid.nodes))


def energy(dim: Dim, u: RadialField) -> float:
    """(1/2) int |grad u|^2 - (n-2)/(2n) int |u|^{2n/(n-2)} over the grid's ball."""
    g = u.grid
    if len(g) < 64:
        raise ValueError("grid too coarse for energy: need at least 64 nodes")
    n = dim.n
    du, _ = g.derivatives(u.values, parity=1)
    q = 2 * n / (n - 2)
    kin = 0.5 * g.integrate(du * du)
    pot = (n - 2) / (2 * n) * g.integrate(np.abs(u.values) ** q)
    return dim.omega * (kin - pot)
