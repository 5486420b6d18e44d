"""Bubble heights: minimise the reduced functional and assemble its spectral data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .green import GreenMatrix

__all__ = [
    "NotPositiveDefiniteError",
    "ConvergenceError",
    "BSolution",
    "functional_I_tilde",
    "grad_I_tilde",
    "hess_I_tilde",
    "height_residual",
    "decoupled_guess",
    "solve_heights",
    "positivity_reciprocal_check",
]


class NotPositiveDefiniteError(ValueError):
    """The interaction matrix is not positive definite."""


class ConvergenceError(ArithmeticError):
    pass


def _beta(n):
    return 4.0 / (n - 2)


def _check_lambda(Lam):
    Lam = np.asarray(Lam, dtype=float)
    if np.any(Lam <= 0) or not np.all(np.isfinite(Lam)):
        raise ValueError("Lambda must have finite positive components")
    return Lam


def functional_I_tilde(gm: GreenMatrix, Lam) -> float:
    """Lambda^T G Lambda - sum Lambda_j^{4/(n-2)}."""
    Lam = _check_lambda(Lam)
    b = _beta(gm.dom.n)
    return float(Lam @ gm.matrix @ Lam - np.sum(Lam**b))


def grad_I_tilde(gm: GreenMatrix, Lam) -> np.ndarray:
    Lam = _check_lambda(Lam)
    b = _beta(gm.dom.n)
    return 2 * gm.matrix @ Lam - b * Lam ** (b - 1)


def hess_I_tilde(gm: GreenMatrix, Lam) -> np.ndarray:
    Lam = _check_lambda(Lam)
    b = _beta(gm.dom.n)
    return 2 * gm.matrix - np.diag(b * (b - 1) * Lam ** (b - 2))


def height_residual(gm: GreenMatrix, b) -> np.ndarray:
    """Left minus right side of the height equations, componentwise."""
    n = gm.dom.n
    b = np.asarray(b, dtype=float)
    H = np.diag(gm.matrix)
    G = -(gm.matrix - np.diag(H))  # off-diagonal Green values, zero diagonal
    cross = b ** ((n - 4) / 2) * (G @ b ** ((n - 2) / 2))
    return b ** (n - 3) * H - cross - 2 * b / (n - 2)


def decoupled_guess(gm: GreenMatrix) -> np.ndarray:
    """Per-point k=1 minimiser, ignoring off-diagonal interaction."""
    n = gm.dom.n
    H = np.diag(gm.matrix)
    return (2.0 / ((n - 2) * H)) ** ((n - 2) / (2 * (n - 4)))


@dataclass(frozen=True)
class BSolution:
    b: np.ndarray
    Lambda: np.ndarray
    hessI: np.ndarray
    M: np.ndarray
    M_formula: np.ndarray
    P: np.ndarray
    sigma_bar: np.ndarray
    residual: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "b": self.b.tolist(),
            "Lambda": self.Lambda.tolist(),
            "sigma_bar": self.sigma_bar.tolist(),
            "residual": self.residual,
        }


def _newton_log(gm, Lam0, tol=1e-12, max_iter=200, escape=None):
    """Damped Newton on ell = log Lambda with Armijo backtracking.

    Returns (Lambda, iterations, converged, escaped). Where the log-space
    Hessian is indefinite a Levenberg shift makes the step a descent direction.
    """
    ell = np.log(np.asarray(Lam0, dtype=float))
    k = len(ell)

    def F(e):
        L = np.exp(e)
        return functional_I_tilde(gm, L)

    for it in range(1, max_iter + 1):
        L = np.exp(ell)
        g = grad_I_tilde(gm, L)
        if np.max(np.abs(g)) < tol:
            return L, it - 1, True, False
        gl = L * g
        Hl = L[:, None] * hess_I_tilde(gm, L) * L[None, :] + np.diag(gl)
        shift = 0.0
        w_min = np.linalg.eigvalsh(Hl)[0]
        if w_min <= 1e-14 * max(1.0, np.max(np.abs(Hl))):
            shift = -w_min + 1e-8 * max(1.0, np.max(np.abs(Hl)))
        step = -np.linalg.solve(Hl + shift * np.eye(k), gl)
        f0 = F(ell)
        slope = gl @ step
        t = 1.0
        # keep log-steps bounded to avoid overflow far from the minimiser
        big = np.max(np.abs(step))
        if big > 5:
            t = 5 / big
        gnorm = np.max(np.abs(g))
        while True:
            trial = ell + t * step
            ft = F(trial)
            if ft <= f0 + 1e-4 * t * slope or t < 1e-14:
                break
            # near the minimiser function differences drown in roundoff; fall
            # back on gradient decrease for undamped convex steps
            if shift == 0.0 and np.max(np.abs(grad_I_tilde(gm, np.exp(trial)))) < 0.5 * gnorm:
                break
            t *= 0.5
        if t < 1e-14:
            # Armijo cannot make progress in floating point: accept as converged if
            # the gradient is already at roundoff level
            return np.exp(ell), it, bool(np.max(np.abs(g)) < 1e3 * tol), False
        ell = trial
        if escape is not None:
            L = np.exp(ell)
            if np.max(L) > escape[1] or np.min(L) < escape[0]:
                return L, it, False, True
    L = np.exp(ell)
    return L, max_iter, bool(np.max(np.abs(grad_I_tilde(gm, L))) < tol), False


def solve_heights(gm: GreenMatrix, start=None, tol: float = 1e-12, max_iter: int = 200) -> BSolution:
    """Minimise the reduced functional and build b, D^2 I(b), M and P."""
    if not gm.is_positive_definite:
        raise NotPositiveDefiniteError("interaction matrix is not positive definite")
    n = gm.dom.n
    Lam0 = decoupled_guess(gm) if start is None else np.asarray(start, dtype=float)
    Lam, it, ok, _ = _newton_log(gm, Lam0, tol=tol, max_iter=max_iter)
    if not ok:
        raise ConvergenceError(f"Newton did not converge in {max_iter} iterations")
    # final polish with pure Newton on Lambda (the Hessian is positive definite at the minimum)
    for _ in range(3):
        g = grad_I_tilde(gm, Lam)
        d = np.linalg.solve(hess_I_tilde(gm, Lam), g)
        if np.all(Lam - d > 0):
            Lam_new = Lam - d
            if np.max(np.abs(grad_I_tilde(gm, Lam_new))) <= np.max(np.abs(g)):
                Lam = Lam_new
    b = Lam ** (2.0 / (n - 2))
    H = np.diag(gm.matrix)
    G = -(gm.matrix - np.diag(H))
    k = len(b)
    # Hessian of I(b), see module docs
    hessI = np.empty((k, k))
    for j in range(k):
        for i in range(k):
            if i == j:
                s = np.sum(np.delete(b ** ((n - 2) / 2) * G[:, j], j))
                hessI[j, j] = ((n - 3) * b[j] ** (n - 4) * H[j]
                               - (n - 4) / 2 * b[j] ** ((n - 6) / 2) * s
                               - 2.0 / (n - 2))
            else:
                hessI[i, j] = -(n - 2) / 2 * (b[i] * b[j]) ** ((n - 4) / 2) * G[i, j]
    M_formula = hessI + 2.0 / (n - 2) * np.eye(k)
    w, V = np.linalg.eigh(hessI)
    P = V.T
    sigma_bar = (n - 2) / 2 * w
    M = 2.0 / (n - 2) * P.T @ np.diag(1 + sigma_bar) @ P
    res = float(np.max(np.abs(height_residual(gm, b))))
    return BSolution(b=b, Lambda=Lam, hessI=hessI, M=M, M_formula=M_formula, P=P,
                     sigma_bar=sigma_bar, residual=res, iterations=it)


def positivity_reciprocal_check(gm: GreenMatrix, max_iter: int = 400, return_trace: bool = False):
    """True when the heights solve succeeds.

    For a non positive definite matrix the damped descent is run anyway and
    must leave every compact subset of the open orthant; the escape is
    reported through ``return_trace``.
    """
    if gm.is_positive_definite:
        try:
            sol = solve_heights(gm)
        except ConvergenceError:
            return (False, {"escaped": False}) if return_trace else False
        return (True, {"Lambda": sol.Lambda}) if return_trace else True
    Lam, it, ok, esc = _newton_log(gm, decoupled_guess(gm), max_iter=max_iter, escape=(1e-12, 1e12))
    info = {"escaped": bool(esc), "iterations": it, "Lambda": Lam, "converged": ok}
    return (False, info) if return_trace else False
