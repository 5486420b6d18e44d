"""Radial spectral theory of L0 = Delta + p U^{p-1}.

Conventions: eigenvalues follow L0 phi + lambda phi = 0, so the ground state
has lambda0 < 0 and lambda is the Rayleigh quotient of
Q(phi, phi) = int |phi'|^2 - p U^{p-1} phi^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.optimize import brentq

from .bubble import (
    Dim,
    RadialField,
    RadialGrid,
    Z_radial,
    Z_radial_dr,
    bubble_dr,
    bubble_drr,
    integrate_halfline,
    potential,
    sinh_grid,
)

__all__ = [
    "ResolutionError",
    "EigenPair",
    "FundamentalSystem",
    "SecondSolution",
    "fv_operator",
    "fv_eigenvalues",
    "shoot_dirichlet_eigenvalue",
    "negative_eigenpair",
    "tail_log_slope",
    "fundamental_grid",
    "second_solution",
    "source_q0",
    "corrector_p0",
    "p0_ivp",
    "coercivity_constant",
    "cutoff",
    "supersolution_g",
    "mode_operator_L1",
    "sphere_eigenvalue",
    "quadratic_form",
    "mode1_forms",
    "kernel_residual",
]


class ResolutionError(ArithmeticError):
    """Two independent discretisations disagree beyond tolerance."""


# ------------------------------------------------------------ eigenproblems


def _fv_grid(R_trunc: float, ds: float, scale: float = 1.0) -> np.ndarray:
    smax = np.arcsinh(R_trunc / scale)
    N = int(np.ceil(smax / ds))
    r = scale * np.sinh(np.linspace(0.0, smax, N + 1))
    r[-1] = R_trunc
    return r


def fv_operator(n: int, r: np.ndarray, V=None):
    """Symmetric flux-form discretisation of -(Delta + V) on nodes r.

    Node r[0] = 0 carries the natural (Neumann) condition and r[-1] is
    Dirichlet. Returns (diag, off, mass) for the interior unknowns, where
    the generalised problem A x = lambda diag(mass) x has been symmetrised
    to the standard form: the returned diag/off already include mass^{-1/2}
    scaling on both sides.
    """
    if V is None:
        V = potential(n, r)
    rh = 0.5 * (r[1:] + r[:-1])
    cond = rh ** (n - 1) / np.diff(r)
    edges = np.concatenate([[0.0], rh, [r[-1]]])
    mass = (edges[1:] ** n - edges[:-1] ** n) / n
    d = np.zeros(len(r))
    d[:-1] += cond
    d[1:] += cond
    d = (d - mass * V)[:-1]
    off = -cond[:-1]
    mass = mass[:-1]
    sm = np.sqrt(mass)
    return d / mass, off / (sm[:-1] * sm[1:]), mass


def fv_eigenvalues(n: int, R_trunc: float, ds: float, count: int = 2, vectors: bool = False):
    r = _fv_grid(R_trunc, ds)
    d, e, mass = fv_operator(n, r)
    if vectors:
        w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1))
        # undo the symmetric scaling: x = mass^{-1/2} y
        x = v / np.sqrt(mass)[:, None]
        return w, r, x
    return eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1), eigvals_only=True)


def _richardson(fine, coarse, order=2):
    f = 2**order
    return (f * fine - coarse) / (f - 1)


def _shoot(n, lam, R_trunc, r0=1e-6):
    V0 = n * (n + 2)
    y0 = [1.0 - (V0 + lam) * r0**2 / (2 * n), -(V0 + lam) * r0 / n]

    def f(r, y):
        return [y[1], -(n - 1) / r * y[1] - (n * (n + 2) / (1 + r * r) ** 2 + lam) * y[0]]

    def ev(r, y):
        return y[0]

    sol = solve_ivp(f, (r0, R_trunc), y0, method="DOP853", rtol=1e-12, atol=1e-30, events=ev)
    return len(sol.t_events[0]), sol.y[0, -1]


def shoot_dirichlet_eigenvalue(n: int, index: int, R_trunc: float, lo: float, hi: float,
                               tol: float = 1e-13) -> float:
    """index-th radial Dirichlet eigenvalue on B_{R_trunc} by zero counting.

    The solution regular at 0 has at least index+1 zeros in (0, R_trunc]
    exactly when lambda >= lambda_index (Sturm oscillation).
    """
    def ok(lam):
        z, end = _shoot(n, lam, R_trunc)
        return z >= index + 1 or (z == index and end == 0.0)

    if ok(lo) or not ok(hi):
        raise ValueError("bracket does not contain the eigenvalue")
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def tail_log_slope(n: int, lam0: float, r, r_far: float | None = None) -> np.ndarray:
    """d log Z0 / dr for the decaying solution, by backward Riccati integration.

    Integrating y = phi'/phi from far out inward is stable for the decaying
    branch, so the starting value is forgotten at rate exp(-2 sqrt|lam0| dr).
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    kappa = sqrt(-lam0)
    if r_far is None:
        r_far = float(np.max(r)) + 30.0 / kappa

    def f(s, y):
        return [-y[0] ** 2 - (n - 1) / s * y[0] - (n * (n + 2) / (1 + s * s) ** 2 + lam0)]

    y_far = -kappa - (n - 1) / (2 * r_far)
    sol = solve_ivp(f, (r_far, float(np.min(r))), [y_far], method="DOP853", rtol=1e-12,
                    atol=1e-14, dense_output=True)
    return sol.sol(r)[0]


@dataclass(frozen=True)
class EigenPair:
    lambda0: float
    Z0: RadialField
    lambda1: float
    lambda0_shoot: float
    lambda0_coarse: float
    truncation_shift: float
    match_radius: float

    def tail_slope(self, r):
        return tail_log_slope(self.Z0.grid.n, self.lambda0, r)


def negative_eigenpair(dim: Dim, R_trunc: float = 100.0, ds: float = 0.002,
                       match_radius: float = 8.0, check_truncation: bool = True) -> EigenPair:
    """Ground state of L0 with its (negative) eigenvalue.

    The eigenvalue is a Richardson extrapolation of two flux-form
    discretisations and is validated against shooting. The eigenvector is
    taken from the finer discretisation up to ``match_radius`` and continued
    beyond by the decaying Riccati tail, which keeps it positive and free of
    roundoff noise where it is below machine precision relative to its peak.
    """
    if R_trunc < 50:
        raise ValueError("truncation radius must be at least 50")
    n = dim.n
    w_c = fv_eigenvalues(n, R_trunc, 2 * ds, count=2)
    w_f, r, x = fv_eigenvalues(n, R_trunc, ds, count=2, vectors=True)
    lam = _richardson(w_f, w_c)
    lam0, lam1 = float(lam[0]), float(lam[1])
    shoot = shoot_dirichlet_eigenvalue(n, 0, R_trunc, lam0 - 0.05, lam0 + 0.05)
    if abs(shoot - lam0) > 1e-4 * abs(shoot):
        raise ResolutionError(f"discrete {lam0} and shooting {shoot} disagree")
    shift = 0.0
    if check_truncation:
        w2 = _richardson(fv_eigenvalues(n, 2 * R_trunc, ds, count=1),
                         fv_eigenvalues(n, 2 * R_trunc, 2 * ds, count=1))
        shift = float(abs(w2[0] - lam0))
        if shift > 1e-6:
            raise ResolutionError(f"truncation shift {shift} too large")
    v = x[:, 0]
    v = v * np.sign(v[0])
    nodes = r[:-1]
    inner = nodes <= match_radius
    # continue the vector beyond match_radius from its value there
    ri = nodes[~inner]
    rm = nodes[inner][-1]
    if len(ri):
        # integrate the log-slope with the trapezoid rule on a fine auxiliary mesh
        fine = np.linspace(rm, ri[-1], int((ri[-1] - rm) / 0.01) + 2)
        yf = tail_log_slope(n, lam0, fine)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (yf[1:] + yf[:-1]) * np.diff(fine))])
        logtail = np.interp(ri, fine, cum)
        v_tail = v[inner][-1] * np.exp(logtail)
        values = np.concatenate([v[inner], v_tail, [0.0]])
    else:
        values = np.concatenate([v, [0.0]])
    # Dirichlet end node carries zero; keep it strictly positive for the invariant
    values[-1] = values[-2] * np.exp(tail_log_slope(n, lam0, r[-1])[0] * (r[-1] - r[-2]))
    grid = RadialGrid(r, n)
    norm = dim.omega * grid.integrate(values**2)
    values = values / sqrt(norm)
    return EigenPair(lambda0=lam0, Z0=RadialField(grid, values), lambda1=lam1,
                     lambda0_shoot=shoot, lambda0_coarse=float(w_c[0]),
                     truncation_shift=shift, match_radius=match_radius)


def coercivity_constant(dim: Dim, R: float, eig: EigenPair | None = None, ds: float = 0.002,
                        constrained: bool = True) -> float:
    """Minimum of Q(phi,phi)/int phi^2 over radial H^1_0(B_{2R}) with phi orthogonal to Z0.

    Solved as the secular equation c^T (A - lambda)^{-1} c = 0 between the
    first two Dirichlet eigenvalues, at two resolutions plus Richardson.
    """
    if R < 10:
        raise ValueError("R must be at least 10")
    n = dim.n
    if eig is None:
        eig = negative_eigenpair(dim, check_truncation=False)
    z0 = CubicSpline(eig.Z0.grid.nodes, np.log(eig.Z0.values))
    vals = []
    for h in (2 * ds, ds):
        r = _fv_grid(2 * R, h)
        d, e, mass = fv_operator(n, r)
        w = eigh_tridiagonal(d, e, select="i", select_range=(0, 1), eigvals_only=True)
        if not constrained:
            vals.append(w[0])
            continue
        c = np.sqrt(mass) * np.exp(z0(r[:-1]))
        c /= np.linalg.norm(c)
        ab = np.zeros((3, len(d)))
        ab[0, 1:] = e
        ab[2, :-1] = e

        def f(lam):
            ab[1] = d - lam
            return float(c @ solve_banded((1, 1), ab, c))

        gap = w[1] - w[0]
        eps = 1e-12 * max(1.0, abs(w[0]))
        hi = w[1] - eps
        lo = w[0] + 1e-6 * gap
        if f(hi) <= 0:
            # root within roundoff of the second eigenvalue
            vals.append(w[1])
        else:
            vals.append(brentq(f, lo, hi, xtol=1e-16, rtol=1e-14, maxiter=500))
    lamR = float(_richardson(vals[1], vals[0]))
    if constrained and lamR < -1e-9:
        raise ResolutionError(f"negative coercivity constant {lamR}")
    return lamR


# ------------------------------------------------------------ second solution


_GLX, _GLW = leggauss(16)


class _LogAntiderivative:
    """F(r) = int_{r_ref}^r f(s) ds on a log-spaced panel table, for r in [lo, hi]."""

    def __init__(self, f, r_ref, lo, hi, du=0.05):
        self.f = f
        self.u_ref = np.log(r_ref)
        ulo, uhi = np.log(lo), np.log(hi)
        n_dn = int(np.ceil((self.u_ref - ulo) / du))
        n_up = int(np.ceil((uhi - self.u_ref) / du))
        self.u = self.u_ref + du * np.arange(-n_dn, n_up + 1)
        self.i_ref = n_dn
        seg = self._panel(self.u[:-1], self.u[1:])
        # accumulate outward from the reference so values near it carry no cancellation
        cum = np.zeros(len(self.u))
        cum[n_dn + 1:] = np.cumsum(seg[n_dn:])
        cum[:n_dn] = -np.cumsum(seg[:n_dn][::-1])[::-1]
        self.cum = cum
        self.lo, self.hi = np.exp(self.u[0]), np.exp(self.u[-1])

    def _panel(self, a, b):
        a = np.asarray(a)[..., None]
        b = np.asarray(b)[..., None]
        h = b - a
        u = a + 0.5 * h * (_GLX + 1)
        s = np.exp(u)
        return np.sum(0.5 * h * _GLW * self.f(s) * s, axis=-1)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.lo * (1 - 1e-12)) or np.any(r > self.hi * (1 + 1e-12)):
            raise ValueError("radius outside tabulated range")
        u = np.log(r)
        k = np.clip(np.searchsorted(self.u, u) - 1, 0, len(self.u) - 2)
        # integrate from the nearer panel edge
        return self.cum[k] + self._panel(self.u[k], u)


class SecondSolution:
    """Z~ with L0 Z~ = 0 and r^{n-1}(Z~' Z - Z~ Z') = 1.

    Reduction of order on r <= r_a and r >= r_b (where Z_{n+1} has no zero);
    an ODE bridge carries value and derivative across the zero at r = 1.
    """

    def __init__(self, dim: Dim, r_a=0.5, r_b=2.0, r_min=1e-9, r_max=1e9):
        self.dim = dim
        n = dim.n
        root = brentq(lambda s: float(Z_radial(dim, s)), r_a, r_b, xtol=1e-15)
        if not (r_a < root < r_b):
            raise ValueError("bridge interval must contain the zero of Z_{n+1}")
        self.zero = root
        self.r_a, self.r_b = r_a, r_b

        def w(s):
            return 1.0 / (s ** (n - 1) * Z_radial(dim, s) ** 2)

        self._FA = _LogAntiderivative(w, r_a, r_min, r_a)
        self._FB = _LogAntiderivative(w, r_b, r_b, r_max)
        V = lambda s: potential(n, s)

        def rhs(s, y):
            return [y[1], -(n - 1) / s * y[1] - V(s) * y[0]]

        ya = [0.0, 1.0 / (r_a ** (n - 1) * float(Z_radial(dim, r_a)))]
        self._bridge = solve_ivp(rhs, (r_a, r_b), ya, method="DOP853", rtol=1e-13, atol=1e-16,
                                 dense_output=True)
        zb, dzb = self._bridge.y[:, -1]
        Zb = float(Z_radial(dim, r_b))
        self.C_B = zb / Zb
        # derivative mismatch at r_b measures the glue quality
        dZb = float(Z_radial_dr(dim, r_b))
        self.glue_error = abs(dzb - (dZb * self.C_B + 1.0 / (r_b ** (n - 1) * Zb))) / abs(dzb)
        # limit at infinity, from a far evaluation
        self.limit = float(self.value(np.array([r_max / 10]))[0])

    def value(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        a = r <= self.r_a
        b = r >= self.r_b
        m = ~(a | b)
        Z = Z_radial(self.dim, r)
        if np.any(a):
            out[a] = Z[a] * self._FA(r[a])
        if np.any(b):
            out[b] = Z[b] * (self.C_B + self._FB(r[b]))
        if np.any(m):
            out[m] = self._bridge.sol(r[m])[0]
        return out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        n = self.dim.n
        out = np.empty_like(r)
        a = r <= self.r_a
        b = r >= self.r_b
        m = ~(a | b)
        Z = Z_radial(self.dim, r)
        dZ = Z_radial_dr(self.dim, r)
        if np.any(a):
            out[a] = dZ[a] * self._FA(r[a]) + 1.0 / (r[a] ** (n - 1) * Z[a])
        if np.any(b):
            out[b] = dZ[b] * (self.C_B + self._FB(r[b])) + 1.0 / (r[b] ** (n - 1) * Z[b])
        if np.any(m):
            out[m] = self._bridge.sol(r[m])[1]
        return out

    def wronskian(self, r):
        r = np.asarray(r, dtype=float)
        return r ** (self.dim.n - 1) * (self.derivative(r) * Z_radial(self.dim, r)
                                         - self.value(r) * Z_radial_dr(self.dim, r))

    __call__ = value


@dataclass(frozen=True)
class FundamentalSystem:
    Z: RadialField
    Ztilde: RadialField
    wronskian_constant: float
    solution: SecondSolution


def fundamental_grid(n: int, num: int = 600) -> RadialGrid:
    """Geometric grid on [1e-3, 1e3] suited to the r^{2-n} singularity of Z~."""
    return RadialGrid(np.geomspace(1e-3, 1e3, num), n, stencil=9)


def second_solution(dim: Dim, grid: RadialGrid | None = None) -> FundamentalSystem:
    """Z = Z_{n+1} and Z~ sampled on ``grid`` (which must exclude r = 0)."""
    if grid is None:
        grid = fundamental_grid(dim.n)
    r = grid.nodes
    if r[0] <= 0:
        raise ValueError("Z~ is singular at r = 0; use a grid starting at r > 0")
    if not (r[0] < 1.0 < r[-1]):
        raise ValueError("grid misses the sign change of Z_{n+1} at r = 1")
    sol = SecondSolution(dim, r_min=min(1e-9, r[0] / 2), r_max=max(1e9, 20 * r[-1]))
    return FundamentalSystem(Z=RadialField(grid, Z_radial(dim, r)),
                             Ztilde=RadialField(grid, sol.value(r)),
                             wronskian_constant=1.0, solution=sol)


# ------------------------------------------------------------ corrector p0


def source_q0(dim: Dim, r):
    """q0 = p U^{p-1} c2 + c1 Z_{n+1}."""
    return potential(dim, r) * dim.c2 + dim.c1 * Z_radial(dim, r)


def _cumulative(f, nodes):
    """int_{nodes[0]}^{nodes[i]} f, Gauss-Legendre per interval."""
    a = nodes[:-1, None]
    h = np.diff(nodes)[:, None]
    s = a + 0.5 * h * (_GLX + 1)
    seg = np.sum(0.5 * h * _GLW * f(s), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


class Corrector:
    """p0 = Z~ A - Z B with A = int_0^r Z q0 s^{n-1}, B = int_0^r Z~ q0 s^{n-1}."""

    def __init__(self, dim: Dim, sol: SecondSolution, r_max: float = 1e4, panels_per_unit_log=40):
        self.dim = dim
        self.sol = sol
        n = dim.n
        self.orth = dim.omega * integrate_halfline(
            lambda s: source_q0(dim, s) * Z_radial(dim, s) * s ** (n - 1))
        # the two pieces c2 int V Z and c1 int Z^2 each have size c1 c2
        self.orth_rel = abs(self.orth) / (dim.c1 * dim.c2)
        if self.orth_rel > 1e-8:
            raise ResolutionError(f"q0 not orthogonal to Z: relative {self.orth_rel}")
        # breakpoints: uniform near 0, logarithmic beyond 1
        near = np.linspace(0.0, 1.0, 41)
        far = np.exp(np.arange(1, int(np.log(r_max) * panels_per_unit_log) + 2) / panels_per_unit_log)
        self.knots = np.concatenate([near, far[far > 1.0]])
        fA = lambda s: Z_radial(dim, s) * source_q0(dim, s) * s ** (n - 1)
        fB = lambda s: sol.value(s) * source_q0(dim, s) * s ** (n - 1)
        self._fA, self._fB = fA, fB
        self.cA = _cumulative(fA, self.knots)
        self.cB = _cumulative(fB, self.knots)
        self.r_max = float(self.knots[-1])
        # int_{knot}^inf of Z q0 s^{n-1}: reverse panel sums plus the tail past r_max
        seg = np.diff(self.cA)
        rm = self.r_max
        # s = rm / u maps the tail onto (0, 1] with a regular integrand
        beyond = quad(lambda u: fA(np.array([rm / u]))[0] * rm / u**2, 0.0, 1.0,
                      epsabs=0.0, epsrel=1e-12, limit=200)[0]
        self.tail_knots = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]]) + beyond

    def _int(self, f, cum, r):
        k = np.clip(np.searchsorted(self.knots, r) - 1, 0, len(self.knots) - 2)
        a = self.knots[k][:, None]
        h = (r - self.knots[k])[:, None]
        s = a + 0.5 * h * (_GLX + 1)
        return cum[k] + np.sum(0.5 * h * _GLW * f(s), axis=1)

    def A(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return self._int(self._fA, self.cA, r)

    def B(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        pos = r > 0
        out[pos] = self._int(self._fB, self.cB, r[pos])
        return out

    def _A_stable(self, r):
        # A(r) tends to int q0 Z = 0, so for r > 2 take it as minus the tail
        A = self.A(r)
        big = r > 2.0
        if np.any(big):
            A[big] = -self._tail_A(r[big])
        return A

    def _tail_A(self, r):
        k = np.clip(np.searchsorted(self.knots, r) - 1, 0, len(self.knots) - 2)
        a = r[:, None]
        h = (self.knots[k + 1] - r)[:, None]
        s = a + 0.5 * h * (_GLX + 1)
        return self.tail_knots[k + 1] + np.sum(0.5 * h * _GLW * self._fA(s), axis=1)

    def value(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r > self.r_max):
            raise ValueError("radius beyond tabulated range")
        out = np.zeros_like(r)
        pos = r > 0
        rp = r[pos]
        out[pos] = self.sol.value(rp) * self._A_stable(rp) - Z_radial(self.dim, rp) * self.B(rp)
        return out

    def derivative(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r > self.r_max):
            raise ValueError("radius beyond tabulated range")
        out = np.zeros_like(r)
        pos = r > 0
        rp = r[pos]
        out[pos] = (self.sol.derivative(rp) * self._A_stable(rp)
                    - Z_radial_dr(self.dim, rp) * self.B(rp))
        return out

    __call__ = value


def corrector_p0(dim: Dim, sys: FundamentalSystem) -> RadialField:
    """p0 on the fundamental system's grid (L0 p0 = q0, p0(0) = 0)."""
    corr = Corrector(dim, sys.solution, r_max=max(1e4, 2 * sys.Z.grid.r_max))
    return RadialField(sys.Z.grid, corr.value(sys.Z.grid.nodes))


def p0_ivp(dim: Dim, r_out, r0: float = 1e-4):
    """The regular solution of L0 p = q0 with p(0) = 0, by direct integration.

    Uses t = log r so the far field is reached in few steps; independent of
    the second-solution construction.
    """
    n = dim.n
    r_out = np.asarray(r_out, dtype=float)
    q00 = float(source_q0(dim, 0.0))
    # series p = q0(0) r^2 / (2n) + O(r^4)
    y0 = [q00 * r0**2 / (2 * n), q00 * r0**2 / n]  # (p, r p')

    def rhs(t, y):
        r = np.exp(t)
        # p_tt + (n-2) p_t = r^2 (q0 - V p)
        return [y[1], -(n - 2) * y[1] + r * r * (source_q0(dim, r) - potential(n, r) * y[0])]

    t1 = np.log(np.max(r_out))
    sol = solve_ivp(rhs, (np.log(r0), t1), y0, method="DOP853", rtol=1e-13, atol=1e-20,
                    dense_output=True)
    out = np.zeros_like(r_out)
    pos = r_out >= r0
    out[pos] = sol.sol(np.log(r_out[pos]))[0]
    small = ~pos
    out[small] = q00 * r_out[small] ** 2 / (2 * n)
    return out


# ------------------------------------------------------------ supersolution


def cutoff(s):
    """chi(s): 1 for s < 1, 0 for s > 2, quintic smoothstep between (C^2)."""
    s = np.asarray(s, dtype=float)
    x = np.clip(s - 1.0, 0.0, 1.0)
    return 1.0 - x**3 * (10 - 15 * x + 6 * x * x)


@dataclass(frozen=True)
class Supersolution:
    g: RadialField
    g2: RadialField
    a: float
    M: float
    R: float
    boundary_value: float
    g1_slope: float


def supersolution_g(dim: Dim, a: float, M: float, R: float, grid: RadialGrid | None = None,
                    num: int = 1200) -> Supersolution:
    """g solving g'' + (n-1)/r g' + p U^{p-1}(1 - chi_M) g + 1/(1+r^a) = 0, g'(0) = 0 = g(2R)."""
    if not 0 < a < 3:
        raise ValueError("a must lie in (0, 3)")
    n = dim.n
    g1_slope = -float(Z_radial_dr(dim, M + 2))
    if not g1_slope < 0:
        raise ValueError("M too small: need g1'(M+2) < 0 for g1 = -Z_{n+1}")
    if 2 * R <= M + 2:
        raise ValueError("2R must exceed M + 2")
    if grid is None:
        grid = sinh_grid(n, 2 * R, num, scale=1.0, stencil=13)
    r_nodes = grid.nodes

    def V(r):
        return potential(n, r) * (1 - cutoff(r - M))

    # states: g2, g2', I = int_0^r g2 s^{n-1}/(1+s^a), J = int_0^r I/(g2^2 s^{n-1})
    def rhs(r, y):
        g2, dg2, I, J = y
        return [dg2, -(n - 1) / r * dg2 - V(r) * g2,
                g2 * r ** (n - 1) / (1 + r**a), I / (g2 * g2 * r ** (n - 1))]

    r0 = 1e-6
    # g2 = 1 near 0; I ~ r^n/n; J ~ r^2/(2n)
    y = [1.0, 0.0, r0**n / n, r0**2 / (2 * n)]
    pieces = []
    brk = [r0, M + 1, M + 2, 2 * R]
    for lo, hi in zip(brk[:-1], brk[1:]):
        s = solve_ivp(rhs, (lo, hi), y, method="DOP853", rtol=1e-13, atol=1e-16, dense_output=True)
        pieces.append((lo, hi, s.sol))
        y = s.y[:, -1]
    J_end = y[3]

    def ev(r):
        out = np.empty((4, len(r)))
        for i, ri in enumerate(r):
            if ri < r0:
                out[:, i] = [1.0, 0.0, ri**n / n, ri * ri / (2 * n)]
                continue
            for lo, hi, so in pieces:
                if ri <= hi:
                    out[:, i] = so(ri)
                    break
        return out

    st = ev(r_nodes)
    if np.any(st[0] <= 0):
        raise ArithmeticError("g2 changes sign; increase M")
    g = st[0] * (J_end - st[3])
    g[-1] = st[0, -1] * (J_end - J_end)
    return Supersolution(g=RadialField(grid, g), g2=RadialField(grid, st[0]), a=a, M=M, R=R,
                         boundary_value=float(g[-1]), g1_slope=g1_slope)


# ------------------------------------------------------------ modes


def sphere_eigenvalue(n: int, ell: int) -> int:
    """Eigenvalues of -Delta on S^{n-1}: ell (ell + n - 2)."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    return ell * (ell + n - 2)


def mode_operator_L1(dim: Dim, phi: RadialField) -> RadialField:
    """phi'' + (n-1)/r phi' - (n-1)/r^2 phi + p U^{p-1} phi (mode-1 component of L0)."""
    g = phi.grid
    v = phi.values
    if g.nodes[0] == 0 and abs(v[0]) > 1e-12 * max(1.0, np.max(np.abs(v))):
        raise ValueError("mode-1 fields must vanish at r = 0")
    out = g.laplacian(v, parity=-1, ell=1) + potential(dim, g.nodes) * v
    return RadialField(g, out)


def kernel_residual(dim: Dim, grid: RadialGrid, index: int) -> np.ndarray:
    """L0 Z_index on interior grid nodes, using the radial profile of the kernel element."""
    n = dim.n
    r = grid.nodes
    if index == n + 1:
        v = Z_radial(dim, r)
        res = grid.laplacian(v) + potential(dim, r) * v
    elif 1 <= index <= n:
        # Z_i = U'(r) x_i/r, a mode-1 function
        v = bubble_dr(dim, r)
        res = grid.laplacian(v, parity=-1, ell=1) + potential(dim, r) * v
    else:
        raise IndexError(f"kernel index must lie in 1..{n + 1}")
    return res[1:-1]


def quadratic_form(dim: Dim, phi: RadialField):
    """(bilinear form, -int phi L0 phi), both radial with the sphere factor."""
    g = phi.grid
    v = phi.values
    d1, _ = g.derivatives(v)
    V = potential(dim, g.nodes)
    q_bil = dim.omega * g.integrate(d1 * d1 - V * v * v)
    q_op = -dim.omega * g.integrate(v * (g.laplacian(v) + V * v))
    return q_bil, q_op


def mode1_forms(dim: Dim, phi: RadialField):
    """Mode-1 quadratic form two ways: -int phi L1 phi, and int |psi'|^2 w_r^2 with phi = w_r psi."""
    g = phi.grid
    r = g.nodes
    v = phi.values
    q_op = -g.integrate(v * mode_operator_L1(dim, phi).values)
    wr = bubble_dr(dim, r)
    wrr = bubble_drr(dim, r)
    d1, _ = g.derivatives(v, parity=-1)
    pos = r > 0
    # psi' = (phi' w_r - phi w_rr) / w_r^2
    dpsi = np.zeros_like(v)
    dpsi[pos] = (d1[pos] * wr[pos] - v[pos] * wrr[pos]) / wr[pos] ** 2
    q_sub = g.integrate(dpsi**2 * wr**2)
    return q_op, q_sub
