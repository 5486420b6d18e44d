"""The corrected multi-bubble ansatz in a ball and its parabolic residual
S(u) = -u_t + Laplacian u + |u|^{p-1} u."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bubble import (Dim, Z_radial, bubble_dr, bubble_profile, compute_constants, potential,
                     sphere_area)
from .green import (BallDomain, DomainError, green_ball, grad_x_green, grad_x_regular,
                    regular_part)
from .linop import Corrector, SecondSolution, source_q0

__all__ = [
    "BubbleConfig",
    "ConfigError",
    "StencilError",
    "correction_weights",
    "ansatz_value",
    "residual_S",
    "error_channels",
    "orthogonality_residuals",
    "sphere_rule",
]


class ConfigError(ValueError):
    """Bubble parameters violate the configuration invariants."""


class StencilError(DomainError):
    """A finite-difference stencil would leave the domain."""


def _arr(x, shape=None):
    a = np.array(x, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BubbleConfig:
    """Instantaneous bubble parameters plus their time derivatives.

    ``lam`` and ``dlam`` are mu - b mu0 and its derivative; ``M`` the
    linearised height matrix, needed only by the projection proxy.
    ``free_space`` drops the Dirichlet correction H.
    """

    dom: BallDomain
    q: np.ndarray
    b: np.ndarray
    mu: np.ndarray
    xi: np.ndarray
    mu0: float
    dmu: np.ndarray | None = None
    dxi: np.ndarray | None = None
    dmu0: float = 0.0
    lam: np.ndarray | None = None
    dlam: np.ndarray | None = None
    M: np.ndarray | None = None
    t: float = float("nan")
    free_space: bool = False
    dim: Dim = field(init=False, repr=False)

    def __post_init__(self):
        n = self.dom.n
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        k = len(q)
        set_ = lambda name, v: object.__setattr__(self, name, v)
        set_("q", _arr(q))
        set_("b", _arr(self.b, (k,)))
        set_("mu", _arr(self.mu, (k,)))
        set_("xi", _arr(self.xi, (k, n)))
        set_("dmu", _arr(np.zeros(k) if self.dmu is None else self.dmu, (k,)))
        set_("dxi", _arr(np.zeros((k, n)) if self.dxi is None else self.dxi, (k, n)))
        lam = self.mu - self.b * self.mu0 if self.lam is None else self.lam
        dlam = self.dmu - self.b * self.dmu0 if self.dlam is None else self.dlam
        set_("lam", _arr(lam, (k,)))
        set_("dlam", _arr(dlam, (k,)))
        set_("dim", compute_constants(n))
        if np.any(self.mu <= 0) or not np.all(np.isfinite(self.mu)):
            raise ConfigError("scalings must be positive")
        if k > 1:
            dmin = min(np.linalg.norm(q[i] - q[j]) for i in range(k) for j in range(i + 1, k))
            if np.any(np.linalg.norm(self.xi - q, axis=1) >= dmin / 4):
                raise ConfigError("centre displaced by more than a quarter of the point spacing")

    @property
    def k(self) -> int:
        return len(self.q)

    def satisfies_smallness(self, sigma: float) -> bool:
        """|mu_j - b_j mu0| <= mu0^{1+sigma} for every j."""
        return bool(np.all(np.abs(self.lam) <= self.mu0 ** (1 + sigma)))


@lru_cache(maxsize=None)
def _corrector(n: int) -> Corrector:
    dim = compute_constants(n)
    return Corrector(dim, SecondSolution(dim), r_max=1e6)


def correction_weights(cfg: BubbleConfig) -> np.ndarray:
    """gamma_j mu0^{n-2} with gamma_j = 2 b_j^2 / ((n-2) c2)."""
    dim = cfg.dim
    return 2 * cfg.b**2 / ((dim.n - 2) * dim.c2) * cfg.mu0 ** (dim.n - 2)


class _Pieces:
    """Per-bubble quantities at a batch of points."""

    def __init__(self, cfg: BubbleConfig, x: np.ndarray, corrected: bool):
        dim, n = cfg.dim, cfg.dim.n
        self.d = x[None, :, :] - cfg.xi[:, None, :]  # (k, m, n)
        r = np.sqrt(np.sum(self.d**2, axis=-1))
        mu = cfg.mu[:, None]
        self.rho = r / mu
        self.U = bubble_profile(dim, self.rho)
        self.Z = Z_radial(dim, self.rho)
        # grad U(y) = U'(rho)/rho * y, with U'(rho)/rho = -(n-2) alpha (1+rho^2)^{-n/2}
        self.dU_over_rho = -(n - 2) * dim.alpha_n * (1 + self.rho**2) ** (-n / 2)
        if cfg.free_space:
            self.H = np.zeros_like(self.rho)
        else:
            self.H = np.stack([regular_part(cfg.dom, x, cfg.q[j]) for j in range(cfg.k)])
        self.corrected = corrected
        if corrected:
            corr = _corrector(n)
            flat = self.rho.ravel()
            if np.any(flat > corr.r_max):
                raise DomainError("point too far from the bubble centre for the tabulated corrector")
            self.w = correction_weights(cfg)[:, None]
            self.p0 = corr.value(flat).reshape(self.rho.shape)
            self.dp0 = corr.derivative(flat).reshape(self.rho.shape)
        else:
            self.w = np.zeros((cfg.k, 1))
            self.p0 = self.dp0 = np.zeros_like(self.rho)


def _points(cfg: BubbleConfig, x, strict=True):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != cfg.dom.n:
        raise ValueError(f"points must have {cfg.dom.n} coordinates")
    if not cfg.free_space:
        cfg.dom._check(x, strict=strict)
    return x


def _terms(cfg: BubbleConfig, pc: _Pieces):
    """(bubble terms A_j, everything else summed per j excluded) as (k, m) arrays."""
    n = cfg.dom.n
    mu = cfg.mu[:, None]
    A = mu ** (-(n - 2) / 2) * pc.U
    small = -mu ** ((n - 2) / 2) * pc.H + mu ** (-(n - 2) / 2) * pc.w * pc.p0
    return A, small


def ansatz_value(cfg: BubbleConfig, x, corrected: bool = True):
    """u* = sum_j [U_{mu_j, xi_j} - mu_j^{(n-2)/2} H(., q_j) + mu_j^{-(n-2)/2} Phi_j(y_j)]."""
    x = _points(cfg, x, strict=False)
    A, small = _terms(cfg, _Pieces(cfg, x, corrected))
    return np.sum(A, axis=0) + np.sum(small, axis=0)


def _exact_residual(cfg: BubbleConfig, x, corrected: bool):
    dim, n, p = cfg.dim, cfg.dom.n, cfg.dim.p
    pc = _Pieces(cfg, x, corrected)
    mu = cfg.mu[:, None]
    dmu = cfg.dmu[:, None]
    A, small = _terms(cfg, pc)

    # time derivative, chain rule on mu_j(t), xi_j(t), mu0(t)
    xi_dot_d = np.einsum("kn,kmn->km", cfg.dxi, pc.d)  # xi_j' . (x - xi_j)
    xi_dot_y = xi_dot_d / mu
    ut = -mu ** (-n / 2) * (dmu * pc.Z + pc.dU_over_rho * xi_dot_y)
    if not cfg.free_space:
        ut += -(n - 2) / 2 * mu ** ((n - 4) / 2) * dmu * pc.H
    # Delta U = -U^p cancels the bubbles' own U^p analytically; only the
    # corrector's Laplacian is kept
    lap = np.zeros_like(pc.U)
    if corrected:
        Phi, dPhi = pc.w * pc.p0, pc.w * pc.dp0
        with np.errstate(invalid="ignore", divide="ignore"):
            radial = np.where(pc.rho > 0, xi_dot_y / pc.rho, 0.0)
        ut += -mu ** (-n / 2) * (dmu * ((n - 2) / 2 * Phi + pc.rho * dPhi) + dPhi * radial)
        ut += mu ** (-(n - 2) / 2) * pc.w * (n - 2) * cfg.dmu0 / cfg.mu0 * pc.p0
        # Laplacian of Phi(y) in x: mu^{-2} (q0 - V p0) times the weight
        lap += mu ** (-(n + 2) / 2) * pc.w * (source_q0(dim, pc.rho) - potential(dim, pc.rho) * pc.p0)

    # nonlinearity minus the bubbles' own U^p, split around the dominant bubble
    jstar = np.argmax(A, axis=0)
    cols = np.arange(A.shape[1])
    Aj = A[jstar, cols]
    # rest is assembled from the small pieces, not by subtracting Aj from u
    mask = np.ones_like(A, dtype=bool)
    mask[jstar, cols] = False
    rest = np.sum(small, axis=0) + np.sum(np.where(mask, A, 0.0), axis=0)
    theta = rest / Aj
    u = Aj + rest
    with np.errstate(invalid="ignore"):
        nonlin = np.where(theta > -0.5,
                          Aj**p * np.expm1(p * np.log1p(np.maximum(theta, -0.5))),
                          np.abs(u) ** (p - 1) * u - Aj**p)
    others = np.sum(np.where(mask, mu ** (-(n + 2) / 2) * pc.U**p, 0.0), axis=0)
    nonlin = nonlin - others
    return -np.sum(ut, axis=0) + np.sum(lap, axis=0) + nonlin


def _fd_residual(traj, x, t, corrected, h, dt):
    cfg = traj(t)
    n = cfg.dom.n
    x = _points(cfg, x)
    if not cfg.free_space:
        reach = np.sqrt(np.sum(x * x, axis=-1)) + 2 * h
        if np.any(reach >= cfg.dom.R):
            raise StencilError("finite-difference stencil leaves the ball")
    val = lambda c, pts: ansatz_value(c, pts, corrected)
    u0 = val(cfg, x)
    lap = np.zeros_like(u0)
    coef = {1: 16.0, 2: -1.0}
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        for s, c in coef.items():
            lap += c * (val(cfg, x + s * e) + val(cfg, x - s * e))
    lap = (lap - 30.0 * n * u0) / (12 * h * h)
    ut = (val(traj(t + dt), x) - val(traj(t - dt), x)) / (2 * dt)
    return -ut + lap + np.abs(u0) ** (cfg.dim.p - 1) * u0


def residual_S(source, x, t: float | None = None, corrected: bool = True, method: str = "exact",
               h: float | None = None, dt: float | None = None):
    """S(u*) at the points x.

    ``source`` is a BubbleConfig carrying the time derivatives, or a callable
    t -> BubbleConfig (a trajectory). ``method="exact"`` uses Delta U = -U^p,
    harmonicity of H and L0 p0 = q0 with chain-rule time derivatives;
    ``method="fd"`` takes fourth-order central differences in space and a
    second-order central difference in time, and needs a trajectory.
    """
    if method == "exact":
        cfg = source if isinstance(source, BubbleConfig) else source(t)
        x = _points(cfg, x)
        return _exact_residual(cfg, x, corrected)
    if method == "fd":
        if isinstance(source, BubbleConfig):
            raise TypeError("finite differences in time need a trajectory")
        cfg = source(t)
        h = 0.002 * float(np.min(cfg.mu)) if h is None else h
        dt = 1e-4 * t if dt is None else dt
        return _fd_residual(source, x, t, corrected, h, dt)
    raise ValueError(f"unknown method {method!r}")


def _height_bracket(cfg: BubbleConfig, j: int, mu):
    """-mu_j^{n-3} H(q_j,q_j) + sum_{i!=j} mu_j^{(n-4)/2} mu_i^{(n-2)/2} G(q_j,q_i)."""
    n, dom, q = cfg.dom.n, cfg.dom, cfg.q
    val = -mu[j] ** (n - 3) * float(regular_part(dom, q[j], q[j]))
    for i in range(cfg.k):
        if i != j:
            val += mu[j] ** ((n - 4) / 2) * mu[i] ** ((n - 2) / 2) * float(green_ball(dom, q[j], q[i]))
    return val


def _gradient_bracket(cfg: BubbleConfig, j: int, mu):
    """-mu_j^{n-2} grad H(q_j,q_j) + sum_{i!=j} (mu_i mu_j)^{(n-2)/2} grad G(q_j,q_i)."""
    n, dom, q = cfg.dom.n, cfg.dom, cfg.q
    W = -mu[j] ** (n - 2) * grad_x_regular(dom, q[j], q[j])
    for i in range(cfg.k):
        if i != j:
            W = W + (mu[i] * mu[j]) ** ((n - 2) / 2) * grad_x_green(dom, q[j], q[i])
    return W


def error_channels(cfg: BubbleConfig, j: int, y):
    """The leading error terms of the uncorrected ansatz near bubble j.

    Returns (e0, e1, s) at x = xi_j + mu_j y, where e0 and e1 are the
    E_0j and E_1j channels scaled back to x (that is mu_j^{-(n+2)/2} mu_j E)
    and s is the full uncorrected residual; the remainder channel is
    s - e0 - e1.
    """
    dim, n = cfg.dim, cfg.dom.n
    y = np.atleast_2d(np.asarray(y, dtype=float))
    rho = np.sqrt(np.sum(y * y, axis=-1))
    V = potential(dim, rho)
    mu = cfg.mu
    E0 = V * _height_bracket(cfg, j, mu) + cfg.dmu[j] * Z_radial(dim, rho)
    gradU = (-(n - 2) * dim.alpha_n * (1 + rho**2) ** (-n / 2))[:, None] * y
    E1 = V * (y @ _gradient_bracket(cfg, j, mu)) + gradU @ cfg.dxi[j]
    scale = mu[j] ** (-(n + 2) / 2) * mu[j]
    x = cfg.xi[j] + mu[j] * y
    s = residual_S(cfg, x, corrected=False)
    return scale * E0, scale * E1, s


def sphere_rule(n: int):
    """Degree-5 rule on S^{n-1}: nodes +-e_i and (+-e_i +- e_j)/sqrt 2."""
    om = sphere_area(n)
    pts, wts = [], []
    A = (4 - n) * om / (2 * n * (n + 2))
    B = om / (n * (n + 2))
    for i in range(n):
        for s in (1.0, -1.0):
            e = np.zeros(n)
            e[i] = s
            pts.append(e)
            wts.append(A)
    r2 = 1 / np.sqrt(2)
    for i in range(n):
        for j in range(i + 1, n):
            for si in (1.0, -1.0):
                for sj in (1.0, -1.0):
                    e = np.zeros(n)
                    e[i], e[j] = si * r2, sj * r2
                    pts.append(e)
                    wts.append(B)
    return np.array(pts), np.array(wts)


def _proxy(cfg: BubbleConfig, j: int, y):
    """mu_0j^{(n+2)/2} S_j(xi_j + mu_0j y) for the dominant part S_j of the error.

    The lambda_j E_0j[b mu0] line is evaluated from E_0j itself, whose height
    bracket at mu = b mu0 involves b_j^{n-3} H and b_j^{(n-4)/2} b_i^{(n-2)/2} G.
    """
    dim, n = cfg.dim, cfg.dom.n
    if cfg.M is None:
        raise ConfigError("projection proxy needs the height matrix M")
    mu0j = cfg.b[j] * cfg.mu0
    muj = cfg.mu[j]
    yj = y * (mu0j / muj)
    rho = np.sqrt(np.sum(yj * yj, axis=-1))
    V = potential(dim, rho)
    Z = Z_radial(dim, rho)
    Mlam = float(cfg.M[j] @ cfg.lam)
    part1 = mu0j * (cfg.dlam[j] * Z - cfg.mu0 ** (n - 4) * V * Mlam)
    mubar = cfg.b * cfg.mu0
    E0bar = V * _height_bracket(cfg, j, mubar) + cfg.b[j] * cfg.dmu0 * Z
    part2 = cfg.lam[j] * E0bar
    gradU = (-(n - 2) * dim.alpha_n * (1 + rho**2) ** (-n / 2))[..., None] * yj
    part3 = muj * (gradU @ cfg.dxi[j] + V * (yj @ _gradient_bracket(cfg, j, cfg.mu)))
    return (mu0j / muj) ** ((n + 2) / 2) * (part1 + part2 + part3)


def orthogonality_residuals(source, t: float | None = None, Rwin: float = 10.0,
                            panels: int = 60, order: int = 16) -> np.ndarray:
    """int_{|y|<2R} proxy_j(y) Z_l(y) dy for every bubble j and l = 1..n+1.

    Radial Gauss-Legendre panels (graded towards the origin) times the
    degree-5 sphere rule, exact in the angle for these integrands.
    """
    cfg = source if isinstance(source, BubbleConfig) else source(t)
    dim, n = cfg.dim, cfg.dom.n
    if not Rwin > 0:
        raise ValueError("window radius must be positive")
    r_out = 2.0 * Rwin
    edges = r_out * np.linspace(0.0, 1.0, panels + 1) ** 2
    x, w = np.polynomial.legendre.leggauss(order)
    a, hh = edges[:-1, None], np.diff(edges)[:, None]
    rr = (a + 0.5 * hh * (x + 1)).ravel()
    wr = (0.5 * hh * w).ravel() * rr ** (n - 1)
    dirs, wd = sphere_rule(n)
    y = rr[:, None, None] * dirs[None, :, :]  # (nr, nd, n)
    W = wr[:, None] * wd[None, :]
    rho = np.broadcast_to(rr[:, None], W.shape)
    dU = bubble_dr(dim, rho)
    Zs = [dU * dirs[None, :, i] for i in range(n)] + [Z_radial(dim, rho)]
    out = np.empty((cfg.k, n + 1))
    for j in range(cfg.k):
        f = _proxy(cfg, j, y)
        for ell in range(n + 1):
            out[j, ell] = np.sum(W * f * Zs[ell])
    return out
