"""Radial simulator for u_t = Laplacian u + u^p on a ball, threshold bisection
over the initial amplitude and extraction of the bubbling rate.

Space: piecewise-linear elements in r with exact stiffness and lumped mass,
so the discrete energy (1/2) u.K u - sum m_i u_i^{p+1}/(p+1) is the natural
Lyapunov function. Time: implicit diffusion with the reaction linearised
about the old state (one Newton step), one tridiagonal solve per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .bubble import Dim, RadialGrid, compute_constants, sphere_area

__all__ = [
    "SchemeError",
    "Scheme",
    "SimState",
    "RunRecord",
    "ThresholdResult",
    "make_scheme",
    "initial_state",
    "step",
    "run",
    "classify_run",
    "bisect_threshold",
    "fit_rate",
    "default_profile",
]

RUNNING, DECAYED, BLOWN_UP, HORIZON = "running", "decayed", "blown_up", "horizon_reached"


class SchemeError(ArithmeticError):
    """Time stepping failed (repeated rejection or loss of positivity)."""


def default_profile(r):
    """(1 - r^2)^2 on the unit ball."""
    r = np.asarray(r, dtype=float)
    return np.clip(1 - r**2, 0.0, None) ** 2


@dataclass(frozen=True, eq=False)
class Scheme:
    grid: RadialGrid
    R_dom: float
    p: float
    omega: float
    off: np.ndarray  # stiffness couplings between free nodes i, i+1 (negative)
    diag: np.ndarray  # stiffness diagonal on free nodes
    mass: np.ndarray  # lumped mass of free nodes
    reaction: bool = True
    max_change: float = 0.02

    @property
    def free(self) -> int:
        return len(self.mass)

    def apply_K(self, u):
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out

    def energy(self, u) -> float:
        kin = 0.5 * float(u @ self.apply_K(u))
        pot = float(np.sum(self.mass * np.abs(u) ** (self.p + 1))) / (self.p + 1) if self.reaction else 0.0
        return self.omega * (kin - pot)


def make_scheme(n: int, R_dom: float = 1.0, nodes: int = 2048, scale: float = 2e-3,
                reaction: bool = True, max_change: float = 0.02) -> Scheme:
    """Sinh-graded nodes on [0, R_dom] clustered at the origin; Dirichlet at R_dom."""
    dim = compute_constants(n)
    s = np.linspace(0.0, np.arcsinh(R_dom / scale), nodes)
    r = scale * np.sinh(s)
    r[-1] = R_dom
    grid = RadialGrid(r, n, stencil=3)
    h = np.diff(r)
    # element stiffness int r^{n-1} dr / h^2, exact
    ke = (r[1:] ** n - r[:-1] ** n) / (n * h * h)
    diag = np.zeros(nodes)
    diag[:-1] += ke
    diag[1:] += ke
    half = np.concatenate([[0.0], 0.5 * (r[1:] + r[:-1]), [R_dom]])
    mass = (half[1:] ** n - half[:-1] ** n) / n
    # drop the Dirichlet node
    return Scheme(grid=grid, R_dom=R_dom, p=dim.p, omega=sphere_area(n), off=-ke[:-1],
                  diag=diag[:-1], mass=mass[:-1], reaction=reaction, max_change=max_change)


@dataclass(frozen=True)
class SimState:
    scheme: Scheme
    u: np.ndarray  # values at the free nodes
    t: float
    dt: float
    energy: float
    sup_u: float
    status: str = RUNNING
    steps: int = 0

    @property
    def grid(self) -> RadialGrid:
        return self.scheme.grid

    def values(self) -> np.ndarray:
        """Values on all grid nodes, including the boundary zero."""
        return np.concatenate([self.u, [0.0]])


def initial_state(scheme: Scheme, alpha: float, profile: Callable = default_profile,
                  dt: float = 1e-6) -> SimState:
    r = scheme.grid.nodes[:-1]
    u = float(alpha) * np.asarray(profile(r / scheme.R_dom), dtype=float)
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise ValueError("initial data must be finite and nonnegative")
    return SimState(scheme=scheme, u=u, t=0.0, dt=dt, energy=scheme.energy(u),
                    sup_u=float(np.max(u)))


def _solve(sc: Scheme, u, dt):
    m = sc.mass
    if sc.reaction:
        up = np.abs(u) ** (sc.p - 1)
        fprime = sc.p * up
        rhs = m * (u / dt + (1 - sc.p) * up * u)
    else:
        fprime = 0.0
        rhs = m * u / dt
    ab = np.zeros((3, sc.free))
    ab[0, 1:] = sc.off
    ab[1] = sc.diag + m / dt - m * fprime
    ab[2, :-1] = sc.off
    return solve_banded((1, 1), ab, rhs, overwrite_ab=True, overwrite_b=True, check_finite=False)


def step(state: SimState, max_retries: int = 10) -> SimState:
    """One accepted step; dt is halved on rejection and adapted afterwards.

    A step is rejected when the relative sup-change exceeds the scheme's
    bound, the energy rises by more than 1e-8 |E|, or positivity is lost.
    """
    if state.status != RUNNING:
        raise ValueError("state is not running")
    sc = state.scheme
    u = state.u
    dt = state.dt
    if sc.reaction and state.sup_u > 0:
        # keeps the linearised system an M-matrix and the update positive
        dt = min(dt, 0.5 / (sc.p * state.sup_u ** (sc.p - 1)))
    sup = max(state.sup_u, 1e-300)
    for _ in range(max_retries):
        new = _solve(sc, u, dt)
        change = float(np.max(np.abs(new - u))) / sup
        ok = np.all(np.isfinite(new)) and change <= sc.max_change
        if ok:
            if np.min(new) < 0:
                if np.min(new) < -1e-12 * sup:
                    ok = False
                else:
                    new = np.maximum(new, 0.0)
        if ok:
            E = sc.energy(new)
            if E > state.energy + 1e-8 * abs(state.energy):
                ok = False
        if ok:
            grow = 1.5 if change < 0.5 * sc.max_change else 1.0
            return SimState(scheme=sc, u=new, t=state.t + dt, dt=dt * grow, energy=E,
                            sup_u=float(np.max(new)), status=RUNNING, steps=state.steps + 1)
        dt *= 0.5
    raise SchemeError(f"step rejected {max_retries} times at t={state.t:.6g}")


@dataclass
class RunRecord:
    alpha: float
    outcome: str
    t: np.ndarray
    sup_u: np.ndarray
    energy: np.ndarray
    steps: int
    energy_monotone: bool

    def mu_proxy(self, dim: Dim) -> np.ndarray:
        return (dim.alpha_n / self.sup_u) ** (2.0 / (dim.n - 2))

    def summary(self) -> dict:
        return {"alpha": self.alpha, "outcome": self.outcome, "steps": self.steps,
                "t_end": float(self.t[-1]), "sup_end": float(self.sup_u[-1]),
                "energy_monotone": self.energy_monotone}


def run(state: SimState, horizon: float, blowup_cap: float = 1e6, decay_level: float = 1e-4,
        max_steps: int = 200000) -> tuple[SimState, RunRecord]:
    """Step until decay, blow-up, horizon or step budget; record sup u and energy."""
    ts, sups, Es = [state.t], [state.sup_u], [state.energy]
    monotone = True
    while True:
        if state.sup_u < decay_level:
            state = replace(state, status=DECAYED)
            break
        if state.sup_u > blowup_cap and _accelerating(ts, sups):
            state = replace(state, status=BLOWN_UP)
            break
        if state.t >= horizon or state.steps >= max_steps:
            state = replace(state, status=HORIZON)
            break
        new = step(state)
        if new.energy > state.energy + 1e-8 * abs(state.energy):
            monotone = False
        state = new
        ts.append(state.t)
        sups.append(state.sup_u)
        Es.append(state.energy)
    rec = RunRecord(alpha=float("nan"), outcome=state.status, t=np.array(ts), sup_u=np.array(sups),
                    energy=np.array(Es), steps=state.steps, energy_monotone=monotone)
    return state, rec


def _accelerating(ts, sups) -> bool:
    """d log sup / dt increasing over the last three checkpoints."""
    if len(ts) < 7:
        return False
    idx = [len(ts) - 7, len(ts) - 5, len(ts) - 3, len(ts) - 1]
    rates = []
    for a, b in zip(idx[:-1], idx[1:]):
        dt = ts[b] - ts[a]
        if dt <= 0:
            return False
        rates.append((np.log(sups[b]) - np.log(sups[a])) / dt)
    return rates[0] < rates[1] < rates[2]


def classify_run(alpha: float, scheme: Scheme, profile: Callable = default_profile,
                 horizon: float = 50.0, blowup_cap: float = 1e6) -> RunRecord:
    """decayed, blown_up, or horizon_reached (inconclusive)."""
    state = initial_state(scheme, alpha, profile)
    _, rec = run(state, horizon, blowup_cap=blowup_cap)
    rec.alpha = float(alpha)
    return rec


@dataclass
class ThresholdResult:
    alpha_lo: float
    alpha_hi: float
    width: float
    depth: int
    runs: list = field(default_factory=list)
    rate_fit: dict | None = None

    def summary(self) -> dict:
        return {"alpha_lo": self.alpha_lo, "alpha_hi": self.alpha_hi, "width": self.width,
                "depth": self.depth, "runs": [r.summary() for r in self.runs],
                "rate_fit": self.rate_fit}


def fit_rate(lo: RunRecord, hi: RunRecord, dim: Dim, separation: float = 0.05,
             start_factor: float = 2.0) -> dict:
    """Slope of log sup u against log t while the bracketing runs still agree.

    The window ends where the two runs' sup u differ by ``separation``
    relative; it starts once sup u has risen by ``start_factor`` above its
    minimum before the window end (the end of the initial transient).
    """
    tg = np.union1d(lo.t, hi.t)
    tg = tg[(tg > 0) & (tg <= min(lo.t[-1], hi.t[-1]))]
    a = np.exp(np.interp(tg, lo.t, np.log(lo.sup_u)))
    b = np.exp(np.interp(tg, hi.t, np.log(hi.sup_u)))
    apart = np.nonzero(np.abs(b - a) > separation * np.minimum(a, b))[0]
    end = apart[0] if len(apart) else len(tg)
    if end < 10:
        return {"status": "fit_unavailable"}
    s = 0.5 * (a[:end] + b[:end])
    tw = tg[:end]
    imin = int(np.argmin(s))
    rise = np.nonzero(s[imin:] >= start_factor * s[imin])[0]
    if len(rise) == 0:
        return {"status": "fit_unavailable"}
    start = imin + rise[0]
    if end - start < 10:
        return {"status": "fit_unavailable"}
    lt, ls = np.log(tw[start:end]), np.log(s[start:end])
    slope, icpt = np.polyfit(lt, ls, 1)
    mu = (dim.alpha_n / s[start:end]) ** (2.0 / (dim.n - 2))
    mu_slope = np.polyfit(lt, np.log(mu), 1)[0]
    return {"status": "ok", "slope": float(slope), "mu_slope": float(mu_slope),
            "t_start": float(tw[start]), "t_end": float(tw[end - 1]),
            "sup_start": float(s[start]), "sup_end": float(s[end - 1]),
            "decades": float((lt[-1] - lt[0]) / np.log(10))}


def bisect_threshold(scheme: Scheme, profile: Callable = default_profile, depth: int = 44,
                     ladder=None, horizon: float = 50.0, blowup_cap: float = 1e6) -> ThresholdResult:
    """Bracket the threshold amplitude on a ladder, then bisect ``depth`` times.

    Bracket arithmetic is exact (rationals); each run uses the nearest double.
    """
    dim = compute_constants(scheme.grid.n)
    ladder = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0] if ladder is None else list(ladder)
    runs = []
    lo_rec = hi_rec = None
    for a in ladder:
        rec = classify_run(a, scheme, profile, horizon, blowup_cap)
        runs.append(rec)
        if rec.outcome == BLOWN_UP:
            hi_rec = rec
            break
        if rec.outcome == DECAYED:
            lo_rec = rec
    if lo_rec is None or hi_rec is None:
        raise SchemeError("amplitude ladder does not bracket the threshold")
    lo, hi = Fraction(lo_rec.alpha), Fraction(hi_rec.alpha)
    width0 = hi - lo
    done = 0
    for _ in range(depth):
        mid = (lo + hi) / 2
        fm = float(mid)
        if fm in (float(lo), float(hi)):
            break
        rec = classify_run(fm, scheme, profile, horizon, blowup_cap)
        runs.append(rec)
        done += 1
        if rec.outcome == BLOWN_UP:
            hi, hi_rec = mid, rec
        elif rec.outcome == DECAYED:
            lo, lo_rec = mid, rec
        else:
            break
    res = ThresholdResult(alpha_lo=float(lo), alpha_hi=float(hi), width=float(hi - lo),
                          depth=done, runs=runs)
    res.rate_fit = fit_rate(lo_rec, hi_rec, dim)
    res.rate_fit["initial_width"] = float(width0)
    return res
