"""Reduced parameter dynamics: mu0(t), the lambda system, the xi drift and the
unstable-mode shooting for e(t)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from .bubble import Dim, bubble_dr, bubble_profile, integrate_halfline
from .bsystem import BSolution
from .green import GreenMatrix, grad_x_green, grad_x_regular

__all__ = [
    "HorizonError",
    "mu0_of_t",
    "mu0_dot",
    "default_sigma",
    "weighted_norm",
    "Trajectory",
    "lambda_system_solve",
    "drift_constant",
    "drift_vectors",
    "xi_drift",
    "LeadingTrajectory",
    "ProjectionState",
    "projection_shoot",
    "shooting_bisection",
    "horizon_for_growth",
]


class HorizonError(ValueError):
    """Integration window too short to separate bounded from growing solutions."""


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    return t


def mu0_of_t(dim: Dim, t):
    """mu0(t) = gamma_n t^{-1/(n-4)}."""
    t = _check_t(t)
    return dim.gamma_n * t ** (-1.0 / (dim.n - 4))


def mu0_dot(dim: Dim, t):
    t = _check_t(t)
    return -mu0_of_t(dim, t) / ((dim.n - 4) * t)


def default_sigma(bs: BSolution) -> float:
    return 0.5 * float(np.min(bs.sigma_bar))


def weighted_norm(dim: Dim, t, h, delta: float) -> float:
    """sup over samples of mu0(t)^{-delta} |h(t)|, |.| the Euclidean norm per sample."""
    t = _check_t(t)
    h = np.asarray(h, dtype=float).reshape(len(t), -1)
    return float(np.max(mu0_of_t(dim, t) ** (-delta) * np.linalg.norm(h, axis=1)))


@dataclass(frozen=True)
class Trajectory:
    t0: float
    t: np.ndarray
    mu0: np.ndarray
    lam: np.ndarray
    dlam: np.ndarray
    xi: np.ndarray
    dxi: np.ndarray
    norms: dict = field(default_factory=dict)
    rk_deviation: float = float("nan")
    ode_residual: float = float("nan")


def _kappas(bs: BSolution, n: int):
    return (1 + bs.sigma_bar) / (n - 4)


def lambda_system_solve(bs: BSolution, dim: Dim, t0: float, t, d, h=None,
                        rtol: float = 1e-10) -> Trajectory:
    """lambda' + t^{-1} P^T diag((1+sigma_j)/(n-4)) P lambda = h.

    The closed form is lambda = P^T nu, nu_j = t^{-kappa_j}(d_j + int_{t0}^t
    s^{kappa_j} (P h)_j ds), with the integral done by adaptive quadrature. The
    same system is also integrated with an embedded 4(5) Runge-Kutta pair;
    the largest relative deviation between the two is stored.
    """
    n = dim.n
    t = np.sort(_check_t(np.atleast_1d(t)))
    if t[0] < t0:
        raise ValueError("sample times must not precede t0")
    P = bs.P
    kap = _kappas(bs, n)
    k = len(kap)
    d = np.asarray(d, dtype=float).reshape(k)
    hf = (lambda s: np.zeros(k)) if h is None else (lambda s: np.asarray(h(s), dtype=float).reshape(k))
    A = P.T @ np.diag(kap) @ P

    def closed(s):
        """lambda at the times s, integrals taken from t0 afresh."""
        out = np.empty((len(s), k))
        for i, si in enumerate(s):
            acc = np.zeros(k)
            if h is not None and si != t0:
                for j in range(k):
                    acc[j] = quad(lambda u: u ** kap[j] * (P @ hf(u))[j], t0, si,
                                  epsabs=0.0, epsrel=1e-13, limit=200)[0]
            out[i] = P.T @ (si ** (-kap) * (d + acc))
        return out

    lam = closed(t)
    hs = np.array([hf(s) for s in t])
    dlam = hs - (lam @ A.T) / t[:, None]

    lam0 = P.T @ (t0 ** (-kap) * d)
    sol = solve_ivp(lambda s, y: hf(s) - A @ y / s, (t0, t[-1]), lam0, method="RK45",
                    rtol=rtol, atol=1e-14 * max(1e-16, np.max(np.abs(lam0))), t_eval=t)
    if not sol.success:
        raise ArithmeticError(sol.message)
    scale = np.maximum(np.linalg.norm(lam, axis=1), 1e-300)
    dev = float(np.max(np.linalg.norm(sol.y.T - lam, axis=1) / scale))
    # ODE residual of the closed form, derivative by a five-point stencil
    hstep = 1e-3 * t
    fd = (8 * (closed(t + hstep) - closed(t - hstep))
          - (closed(t + 2 * hstep) - closed(t - 2 * hstep))) / (12 * hstep[:, None])
    res = fd - dlam
    # relative to the size of the terms being balanced
    size = np.linalg.norm(hs, axis=1) + np.linalg.norm(lam @ A.T, axis=1) / t
    ode_res = float(np.max(np.linalg.norm(res, axis=1) / np.maximum(size, 1e-300)))
    sig = default_sigma(bs)
    norms = {
        "lambda_1+sigma": weighted_norm(dim, t, lam, 1 + sig),
        "dlambda_n-3+sigma": weighted_norm(dim, t, dlam, n - 3 + sig),
    }
    mu0 = mu0_of_t(dim, t)
    return Trajectory(t0=t0, t=t, mu0=mu0, lam=lam, dlam=dlam, xi=np.empty((len(t), 0)),
                      dxi=np.empty((len(t), 0)), norms=norms, rk_deviation=dev, ode_residual=ode_res)


def drift_constant(dim: Dim, parts: bool = False):
    """c = p int U^{p-1} dU/dy1 y1 / int (dU/dy1)^2, reduced to radial integrals.

    The angular average of y1^2 is r^2/n in both integrals, so the factors cancel.
    """
    n, p = dim.n, dim.p
    num = integrate_halfline(lambda r: p * bubble_profile(dim, r) ** (p - 1) * bubble_dr(dim, r) * r**n)
    den = integrate_halfline(lambda r: bubble_dr(dim, r) ** 2 * r ** (n - 1))
    c = num / den
    return (c, num, den) if parts else c


def drift_vectors(bs: BSolution, gm: GreenMatrix) -> np.ndarray:
    """D_j = b_j^{n-2} grad_x H(q_j, q_j) - sum_{i != j} (b_i b_j)^{(n-2)/2} grad_x G(q_j, q_i)."""
    dom, q, b = gm.dom, gm.q, bs.b
    n = dom.n
    k = len(q)
    D = np.zeros((k, n))
    for j in range(k):
        D[j] = b[j] ** (n - 2) * grad_x_regular(dom, q[j], q[j])
        for i in range(k):
            if i != j:
                D[j] -= (b[i] * b[j]) ** ((n - 2) / 2) * grad_x_green(dom, q[j], q[i])
    return D


def _mu0_power_tail(dim: Dim, t, m: float):
    """int_t^inf mu0(s)^m ds in closed form (pure power, needs m > n-4)."""
    n = dim.n
    e = m / (n - 4)
    if e <= 1:
        raise ValueError("non-integrable tail")
    return dim.gamma_n**m * t ** (1 - e) / (e - 1)


def xi_drift(bs: BSolution, gm: GreenMatrix, dim: Dim, t0: float, t, rtol: float = 1e-10) -> Trajectory:
    """xi_j(t) solving xi_j' = c mu0^{n-2} D_j with xi_j -> q_j as t -> infinity.

    The closed form is xi_j = q_j - c D_j int_t^inf mu0^{n-2}; it is checked
    against a Runge-Kutta integration started from the closed-form value at t0.
    """
    n = dim.n
    t = np.sort(_check_t(np.atleast_1d(t)))
    c = drift_constant(dim)
    D = drift_vectors(bs, gm)
    q = gm.q
    tail = _mu0_power_tail(dim, t, n - 2)
    xi = q[None] - c * D[None] * tail[:, None, None]
    dxi = c * D[None] * (mu0_of_t(dim, t) ** (n - 2))[:, None, None]
    # integrate the displacement xi - q so the tolerance is relative to it
    x0 = (-c * D * _mu0_power_tail(dim, t0, n - 2)).ravel()
    sol = solve_ivp(lambda s, y: (c * D * mu0_of_t(dim, s) ** (n - 2)).ravel(), (t0, t[-1]), x0,
                    method="RK45", rtol=rtol, atol=1e-30, t_eval=t)
    disp = (xi - q[None]).reshape(len(t), -1)
    rk_disp = sol.y.T
    scale = np.maximum(np.linalg.norm(disp, axis=1), 1e-300)
    dev = float(np.max(np.linalg.norm(rk_disp - disp, axis=1) / scale)) if np.any(D) else float(
        np.max(np.abs(rk_disp)))
    sig = default_sigma(bs)
    norms = {
        "xi-q_1+sigma": weighted_norm(dim, t, disp, 1 + sig),
        "dxi_n-3+sigma": weighted_norm(dim, t, dxi.reshape(len(t), -1), n - 3 + sig),
    }
    k = len(q)
    return Trajectory(t0=t0, t=t, mu0=mu0_of_t(dim, t), lam=np.zeros((len(t), k)),
                      dlam=np.zeros((len(t), k)), xi=xi, dxi=dxi, norms=norms, rk_deviation=dev)


class LeadingTrajectory:
    """mu_j = b_j mu0 + lambda_j and xi_j from the explicit leading-order systems.

    ``d`` gives the free constants of the homogeneous lambda system (zero
    means lambda = 0). With ``drift=False`` the centres stay at q.
    """

    def __init__(self, dim: Dim, gm: GreenMatrix, bs: BSolution, d=None, drift: bool = True,
                 lam_override=None):
        self.dim, self.gm, self.bs = dim, gm, bs
        k = len(bs.b)
        self.d = np.zeros(k) if d is None else np.asarray(d, dtype=float)
        self.kap = _kappas(bs, dim.n)
        self.c = drift_constant(dim)
        self.D = drift_vectors(bs, gm) if drift else np.zeros_like(gm.q)
        # optional callable t -> (lambda, lambda') replacing the homogeneous solution
        self.lam_override = lam_override

    def lam(self, t):
        if self.lam_override is not None:
            return self.lam_override(t)
        P = self.bs.P
        nu = t ** (-self.kap) * self.d
        return P.T @ nu, P.T @ (-self.kap / t * nu)

    def config(self, t: float):
        from .ansatz import BubbleConfig

        dim, n = self.dim, self.dim.n
        m0 = float(mu0_of_t(dim, t))
        dm0 = float(mu0_dot(dim, t))
        lam, dlam = self.lam(t)
        b = self.bs.b
        tail = _mu0_power_tail(dim, t, n - 2)
        xi = self.gm.q - self.c * self.D * tail
        dxi = self.c * self.D * m0 ** (n - 2)
        return BubbleConfig(dom=self.gm.dom, q=self.gm.q, b=b, mu=b * m0 + lam, xi=xi, mu0=m0,
                            dmu=b * dm0 + dlam, dxi=dxi, dmu0=dm0, lam=lam, dlam=dlam,
                            M=self.bs.M_formula, t=t)

    __call__ = config


@dataclass(frozen=True)
class ProjectionState:
    e0: float
    a: float
    t: np.ndarray
    e: np.ndarray
    e_plus: np.ndarray
    e_minus: np.ndarray
    f: np.ndarray
    eps: float
    growth_plus: float
    growth_minus: float

    def report(self) -> dict:
        return {"e0_star": self.e0, "growth_factor_plus": self.growth_plus,
                "growth_factor_minus": self.growth_minus}


def _shoot_params(dim: Dim, bj: float, eig_lambda0: float):
    n = dim.n
    g2 = (bj * dim.gamma_n) ** 2
    kappa = (n - 2) / (n - 4)
    a = abs(eig_lambda0) * (n - 4) / ((n - 2) * g2)
    return g2, kappa, a


def _rhs(dim, g2, lam0, f):
    n = dim.n
    return lambda s, y: s ** (2.0 / (n - 4)) * (abs(lam0) * y + f(s)) / g2


def _distinguished(dim, g2, kappa, a, f, t0):
    n = dim.n

    def w(s):
        return s ** (2.0 / (n - 4)) * f(s) / g2 * np.exp(-a * (s**kappa - t0**kappa))

    # the weight collapses once a s^kappa passes ~ 800
    s_end = ((a * t0**kappa + 800.0) / a) ** (1 / kappa)
    val, _ = quad(w, t0, s_end, epsabs=0.0, epsrel=2e-14, limit=500)
    return -val


def horizon_for_growth(dim: Dim, bj: float, lambda0: float, t0: float, growth: float) -> float:
    """Time by which the homogeneous solution has grown by ``growth``."""
    _, kappa, a = _shoot_params(dim, bj, lambda0)
    return float((t0**kappa + np.log(growth) / a) ** (1 / kappa))


def projection_shoot(dim: Dim, bj: float, f, t0: float, T: float, lambda0: float,
                     eps: float = 1e-6, samples: int = 400, rtol: float = 1e-10) -> ProjectionState:
    """mu_0j^2 e' = |lambda0| e + f with mu_0j = b_j gamma_n t^{-1/(n-4)}.

    Returns the distinguished bounded solution and the runs from e0* +- eps.
    """
    if lambda0 >= 0:
        raise ValueError("lambda0 must be negative")
    g2, kappa, a = _shoot_params(dim, bj, lambda0)
    if np.exp(min(a * (T**kappa - t0**kappa), 700.0)) < 10:
        raise HorizonError("horizon too short: homogeneous growth below 10")
    e0 = _distinguished(dim, g2, kappa, a, f, t0)
    ts = np.linspace(t0, T, samples)
    rhs = _rhs(dim, g2, lambda0, f)

    def run(y0):
        sol = solve_ivp(rhs, (t0, T), [y0], method="RK45", rtol=rtol, atol=1e-16, t_eval=ts)
        if not sol.success:
            raise ArithmeticError(sol.message)
        return sol.y[0]

    e = run(e0)
    ep = run(e0 + eps)
    em = run(e0 - eps)
    ref = max(np.max(np.abs(e)), 1e-300)
    fs = np.array([f(s) for s in ts])
    return ProjectionState(e0=e0, a=a, t=ts, e=e, e_plus=ep, e_minus=em, f=fs, eps=eps,
                           growth_plus=float(np.max(np.abs(ep)) / ref),
                           growth_minus=float(np.max(np.abs(em)) / ref))


def shooting_bisection(dim: Dim, bj: float, f, t0: float, T: float, lambda0: float,
                       lo: float, hi: float, tol: float = 1e-13, rtol: float = 1e-10,
                       max_iter: int = 200) -> float:
    """Recover e0* from the sign of e(T): above it e blows up positive, below negative."""
    g2, _, _ = _shoot_params(dim, bj, lambda0)
    rhs = _rhs(dim, g2, lambda0, f)

    def sign_at_T(y0):
        sol = solve_ivp(rhs, (t0, T), [y0], method="RK45", rtol=rtol, atol=1e-16)
        return np.sign(sol.y[0, -1])

    if not (sign_at_T(lo) < 0 < sign_at_T(hi)):
        raise ValueError("bracket does not straddle the distinguished value")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
        if sign_at_T(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
