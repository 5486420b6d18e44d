"""Command-line entry point: ``bubbling <command> [options]``.

Exit codes: 0 success, 1 a ``--check`` suite failed, 2 unknown command,
3 invalid configuration, 4 numerical failure. Failures print a JSON error
record on stderr. JSON floats are written with ``repr`` (shortest string
that round-trips); CSV floats with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bsystem import ConvergenceError, NotPositiveDefiniteError, solve_heights
from .bubble import DimensionError, compute_constants
from .green import BallDomain, DegenerateConfigurationError, DomainError, GreenMatrix, interaction_matrix

COMMANDS = ("constants", "gmatrix", "bsolve", "spectrum", "residual", "dynamics", "simulate")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_UNKNOWN, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3, 4


class ConfigInvalid(ValueError):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass
class RunConfig:
    command: str
    n: int = 5
    input: str | None = None
    output: str | None = None
    format: str = "json"
    seed: int = 0
    check: bool = False
    options: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise KeyError(self.command)
        if int(self.n) != self.n or self.n < 5:
            raise ConfigInvalid("dimension-unsupported", f"n={self.n}: need an integer n >= 5")
        if self.format not in ("json", "csv"):
            raise ConfigInvalid("invalid-format", f"unknown format {self.format!r}")
        if self.output is not None:
            out = Path(self.output)
            parent = out if self.command == "simulate" else out.parent
            parent = parent if str(parent) else Path(".")
            probe = parent
            while not probe.exists() and probe != probe.parent:
                probe = probe.parent
            if not os.access(probe, os.W_OK):
                raise ConfigInvalid("output-not-writable", f"cannot write under {parent}")


# ------------------------------------------------------------------ serialisation


def _plain(obj):
    """Recursively convert numpy containers and scalars to JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, allow_nan=True) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([("%.17g" % v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(cfg: RunConfig, text: str, path: str | None = None):
    path = path if path is not None else cfg.output
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _read_json(cfg: RunConfig, required: bool = False) -> dict:
    if cfg.input is None:
        if required:
            raise ConfigInvalid("missing-input", f"{cfg.command} needs --input")
        return {}
    try:
        with open(cfg.input) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid("unreadable-input", str(exc)) from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("unreadable-input", "input must be a JSON object")
    return data


def _n_from(cfg: RunConfig, data: dict) -> int:
    n = int(data.get("n", cfg.n))
    if n < 5:
        raise ConfigInvalid("dimension-unsupported", f"n={n}: need n >= 5")
    return n


def _checks_report(cfg: RunConfig, results: dict) -> int:
    ok = all(r["pass"] for r in results.values())
    _emit(cfg, dumps({"command": cfg.command, "check": results, "passed": ok}))
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _entry(passed, **values) -> dict:
    return {"pass": bool(passed), **values}


def _random_points(rng, k: int, n: int, rmin: float = 0.1, rmax: float = 0.9):
    q = rng.normal(size=(k, n))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return q * rng.uniform(rmin, rmax, size=(k, 1))


# ------------------------------------------------------------------ constants


def _cmd_constants(cfg: RunConfig) -> int:
    from .bubble import RadialField, Z_radial, bubble_dr, bubble_profile, energy, potential, sinh_grid

    dim = compute_constants(cfg.n)
    if not cfg.check:
        _emit(cfg, dumps(dim.as_dict()))
        return EXIT_OK
    n = dim.n
    g = sinh_grid(n, 1e3, 400, scale=1.0, stencil=13)
    r = g.nodes
    U = bubble_profile(dim, r)
    pde = float(np.max(np.abs(g.laplacian(U) + U**dim.p)[1:-1]))
    Z = Z_radial(dim, r)
    kz = float(np.max(np.abs(g.laplacian(Z) + potential(dim, r) * Z)[1:-1]))
    Up = bubble_dr(dim, r)
    k1 = float(np.max(np.abs(g.laplacian(Up, parity=-1, ell=1) + potential(dim, r) * Up)[1:-1]))
    ge = sinh_grid(n, 1e5, 800, scale=1.0, stencil=13)
    E = [energy(dim, RadialField(ge, mu ** (-(n - 2) / 2) * bubble_profile(dim, ge.nodes / mu)))
         for mu in (1.0, 0.25, 0.5, 2.0, 4.0)]
    spread = float(max(abs(e / E[0] - 1) for e in E[1:]))
    c1_rel = abs(dim.c1 - dim.c1_alt) / dim.c1
    return _checks_report(cfg, {
        "c1_formulas_agree": _entry(c1_rel < 1e-8, value=c1_rel),
        "bubble_pde_residual": _entry(pde < 1e-8, value=pde),
        "kernel_residual": _entry(max(kz, k1) < 1e-6, value=max(kz, k1)),
        "energy_scaling_invariance": _entry(spread < 1e-6, value=spread),
    })


# ------------------------------------------------------------------ gmatrix / bsolve


def _gm_from_points(data: dict, n: int) -> GreenMatrix:
    R = float(data.get("R", 1.0))
    pts = data.get("points")
    if pts is None:
        raise ConfigInvalid("missing-points", "input needs a 'points' array")
    dom = BallDomain(n, R)
    return interaction_matrix(dom, np.asarray(pts, dtype=float))


def _gmatrix_input(cfg: RunConfig) -> GreenMatrix:
    data = _read_json(cfg)
    n = _n_from(cfg, data)
    if "points" not in data:
        rng = np.random.default_rng(cfg.seed)
        k = int(cfg.options.get("k") or 2)
        data = {"R": data.get("R", 1.0), "points": _random_points(rng, k, n) * float(data.get("R", 1.0))}
    return _gm_from_points(data, n)


def _cmd_gmatrix(cfg: RunConfig) -> int:
    from .green import green_ball, is_pd_cholesky, robin

    gm = _gmatrix_input(cfg)
    if not cfg.check:
        _emit(cfg, dumps(gm.to_dict()))
        return EXIT_OK
    n = gm.dom.n
    sym = float(np.max(np.abs(gm.matrix - gm.matrix.T)))
    rng = np.random.default_rng(cfg.seed)
    agree, scalar = True, True
    for _ in range(100):
        q = _random_points(rng, 2, n, 0.05, 0.95)
        g = interaction_matrix(BallDomain(n, 1.0), q)
        agree &= g.is_positive_definite == is_pd_cholesky(g.matrix)
        H1, H2 = robin(g.dom, q[0]), robin(g.dom, q[1])
        G = green_ball(g.dom, q[0], q[1])
        scalar &= g.is_positive_definite == bool(H1 * H2 - G * G > 0)
    return _checks_report(cfg, {
        "symmetric": _entry(sym <= 1e-12 * np.max(np.abs(gm.matrix)), value=sym),
        "eigen_cholesky_agree": _entry(gm.is_positive_definite == is_pd_cholesky(gm.matrix)),
        "random_eigen_cholesky_agree": _entry(agree),
        "k2_scalar_criterion": _entry(scalar),
    })


def gm_from_dict(data: dict) -> GreenMatrix:
    """Rebuild a GreenMatrix from ``gmatrix`` output without recomputing it."""
    n = int(data["n"])
    dom = BallDomain(n, float(data.get("R", 1.0)))
    q = np.asarray(data["points"], dtype=float)
    if "matrix" not in data:
        return interaction_matrix(dom, q)
    M = np.asarray(data["matrix"], dtype=float)
    ev = np.asarray(data.get("eigenvalues", np.linalg.eigvalsh(M)), dtype=float)
    pd = bool(data.get("positive_definite", ev[0] > 1e-12 * np.linalg.norm(M, 2)))
    for a in (q, M, ev):
        a.setflags(write=False)
    return GreenMatrix(dom=dom, q=q, matrix=M, eigen=ev, is_positive_definite=pd)


def _cmd_bsolve(cfg: RunConfig) -> int:
    from .bsystem import grad_I_tilde

    data = _read_json(cfg, required=True)
    data.setdefault("n", cfg.n)
    _n_from(cfg, data)
    try:
        gm = gm_from_dict(data)
    except KeyError as exc:
        raise ConfigInvalid("missing-field", f"input lacks {exc}") from exc
    bs = solve_heights(gm)
    if not cfg.check:
        out = bs.to_dict()
        out.update({"M": bs.M, "P": bs.P, "iterations": bs.iterations})
        _emit(cfg, dumps(out))
        return EXIT_OK
    n = gm.dom.n
    grad = float(np.max(np.abs(grad_I_tilde(gm, bs.Lambda))))
    bound = 2.0 / (n - 2) * (1 + float(np.min(bs.sigma_bar)))
    m_min = float(np.min(np.linalg.eigvalsh(bs.M_formula)))
    other = solve_heights(gm, start=2.0 * bs.Lambda + 0.1)
    spread = float(np.max(np.abs(other.b - bs.b)))
    return _checks_report(cfg, {
        "system_residual": _entry(bs.residual < 1e-10, value=bs.residual),
        "gradient_zero": _entry(grad < 1e-10, value=grad),
        "M_eigen_bound": _entry(m_min >= bound - 1e-10, value=m_min, bound=bound),
        "M_formula_agrees": _entry(float(np.max(np.abs(bs.M - bs.M_formula))) < 1e-10),
        "unique_from_other_start": _entry(spread < 1e-8, value=spread),
    })


# ------------------------------------------------------------------ spectrum


def _cmd_spectrum(cfg: RunConfig) -> int:
    from .linop import Corrector, SecondSolution, coercivity_constant, fv_eigenvalues, negative_eigenpair

    dim = compute_constants(cfg.n)
    n = dim.n
    radii = [float(r) for r in (cfg.options.get("radii") or (10.0, 20.0, 40.0))]
    eig = negative_eigenpair(dim)
    coer = []
    for R in radii:
        lr = coercivity_constant(dim, R, eig)
        coer.append({"R": R, "lambdaR": lr, "product_R_pow": lr * R ** (n - 2)})
    sol = SecondSolution(dim)
    corr = Corrector(dim, sol)
    r10 = 10.0
    last = np.geomspace(100.0, 1000.0, 41)
    r2p = last**2 * np.abs(corr.value(last))
    ref = r10**2 * abs(float(corr.value(np.array([r10]))[0]))
    ratio = float(np.max(r2p) / ref)
    out = {
        "n": n,
        "lambda0": eig.lambda0,
        "lambda0_shooting": eig.lambda0_shoot,
        "lambda1": eig.lambda1,
        "coercivity": coer,
        "p0_decay_check": {"sup_r2p0_last_decade_over_r10": ratio, "bounded": ratio <= 2.0,
                           "orthogonality": corr.orth_rel},
    }
    if not cfg.check:
        _emit(cfg, dumps(out))
        return EXIT_OK
    # fit the raw discrete eigenvector, not the continued tail stored in eig.Z0
    w, r, x = fv_eigenvalues(n, 100.0, 0.002, count=1, vectors=True)
    rr, v = r[:-1], np.abs(x[:, 0])
    m = (rr >= 10) & (rr <= 20)
    slope = np.polyfit(rr[m], np.log(v[m]) + (n - 1) / 2 * np.log(rr[m]), 1)[0]
    slope_err = float(abs(slope / -np.sqrt(-eig.lambda0) - 1))
    wr = float(np.max(np.abs(sol.wronskian(np.geomspace(1e-3, 1e3, 50)) - 1)))
    prods = [c["product_R_pow"] for c in coer]
    return _checks_report(cfg, {
        "lambda0_negative": _entry(eig.lambda0 < 0, value=eig.lambda0),
        "lambda0_simple": _entry(eig.lambda1 >= 0, value=eig.lambda1),
        "Z0_positive": _entry(bool(np.all(eig.Z0.values > 0))),
        "Z0_tail_slope": _entry(slope_err < 0.05, value=slope_err),
        "wronskian": _entry(wr < 1e-8, value=wr),
        "q0_orthogonal": _entry(corr.orth_rel < 1e-8, value=corr.orth_rel),
        "coercivity_nonnegative": _entry(all(c["lambdaR"] >= 0 for c in coer)),
        "coercivity_scaling": _entry(max(prods) <= 4 * min(prods), value=prods),
        "p0_decay": _entry(ratio <= 2.0, value=ratio),
    })


# ------------------------------------------------------------------ residual


def _trajectory(data: dict, n: int, drift: bool = True):
    from .dynamics import LeadingTrajectory

    dim = compute_constants(n)
    if "points" in data:
        q = np.asarray(data["points"], dtype=float)
    else:
        q = np.zeros((1, n))
        q[0, 0] = 0.3
    gm = interaction_matrix(BallDomain(n, float(data.get("R", 1.0))), q)
    bs = solve_heights(gm)
    d = data.get("d")
    return dim, gm, bs, LeadingTrajectory(dim, gm, bs, d=d, drift=bool(data.get("drift", drift)))


def _predicted_exponent(n: int, near: bool) -> float:
    # near the centre the corrected scaled residual is O(mu0^n); elsewhere the
    # slowest of the far-field channels dominates
    return float(n) if near else min((n + 2) / 2, (3 * n - 10) / 2)


def _cmd_residual(cfg: RunConfig) -> int:
    from .ansatz import BubbleConfig, error_channels, residual_S

    data = _read_json(cfg)
    n = _n_from(cfg, data)
    dim, gm, bs, traj = _trajectory(data, n)
    if cfg.check:
        cfree = BubbleConfig(dom=BallDomain(n, 50.0), q=np.zeros((1, n)), b=[1.0], mu=[1.0],
                             xi=np.zeros((1, n)), mu0=1.0, free_space=True)
        X = np.random.default_rng(cfg.seed).normal(size=(6, n)) * 1.5
        fd = float(np.max(np.abs(residual_S(lambda t: cfree, X, 1.0, corrected=False, method="fd"))))
        t = (dim.gamma_n / 0.05) ** (n - 4)
        c = traj(t)
        Y = np.zeros((2, n))
        Y[1, 0] = 1.0
        e0, e1, s = error_channels(c, 0, Y)
        chan = float(np.max(np.abs((e0 + e1) / s - 1)))
        return _checks_report(cfg, {
            "free_bubble_fd_residual": _entry(fd < 1e-6, value=fd),
            "error_channels_assemble": _entry(chan < 0.1, value=chan),
        })
    if "t_values" in data:
        ts = [float(t) for t in data["t_values"]]
    else:
        t1 = (dim.gamma_n / 0.05) ** (n - 4)
        ts = [t1, 4 * t1]
    probes = data.get("probe_points") or [{"bubble": 0, "y": [0.0] * n}, [-0.5] + [0.0] * (n - 1)]
    rows = []
    for probe in probes:
        rel = isinstance(probe, dict)
        vals = []
        for t in ts:
            c = traj(t)
            if rel:
                j = int(probe.get("bubble", 0))
                x = c.xi[j] + c.mu[j] * np.asarray(probe.get("y", [0.0] * n), dtype=float)
                scale = c.mu[j] ** ((n + 2) / 2)
            else:
                x = np.asarray(probe, dtype=float)
                scale = 1.0
            su = float(residual_S(c, x[None], corrected=False)[0])
            sc = float(residual_S(c, x[None], corrected=True)[0])
            vals.append((t, x, su * scale, sc * scale, c.mu0))
        near = rel and not np.any(probe.get("y", [0.0]))
        pred = _predicted_exponent(n, near)
        if len(vals) > 1:
            lm = np.log([v[4] for v in vals])
            ls = np.log(np.abs([v[3] for v in vals]))
            fit = float(np.polyfit(lm, ls, 1)[0])
        else:
            fit = float("nan")
        for t, x, su, sc, _ in vals:
            rows.append((t, " ".join("%.17g" % v for v in x), su, sc, pred, fit))
    header = ["t", "x", "S_uncorrected", "S_corrected", "predicted_exponent", "fitted_exponent"]
    if cfg.format == "json":
        _emit(cfg, dumps({"columns": header, "rows": [list(r) for r in rows]}))
    else:
        _emit(cfg, csv_text(header, rows))
    return EXIT_OK


# ------------------------------------------------------------------ dynamics


def _cmd_dynamics(cfg: RunConfig) -> int:
    from .dynamics import (horizon_for_growth, lambda_system_solve, projection_shoot,
                           shooting_bisection, xi_drift)
    from .linop import negative_eigenpair

    data = _read_json(cfg)
    n = _n_from(cfg, data)
    dim, gm, bs, _ = _trajectory(data, n)
    k = len(bs.b)
    t0 = float(data.get("t0", 10.0))
    t_end = float(data.get("t_end", 100 * t0))
    samples = int(data.get("samples", 25))
    ts = np.geomspace(t0, t_end, samples)
    d = data.get("d", [1.0] * k)
    lam = lambda_system_solve(bs, dim, t0, ts, d=d)
    xi = xi_drift(bs, gm, dim, t0, ts)
    sh = data.get("shooting", {})
    bj = float(sh.get("bj", 1.0))
    s0 = float(sh.get("t0", 1.0))
    pw = float(sh.get("forcing_power", 2.0))
    f = lambda s: s ** (-pw)
    lam0 = negative_eigenpair(dim, check_truncation=False).lambda0
    T = horizon_for_growth(dim, bj, lam0, s0, float(sh.get("growth", 1e9)))
    st = projection_shoot(dim, bj, f, s0, T, lam0)
    report = st.report()
    report.update({"horizon": T, "lambda0": lam0, "sup_e_star": float(np.max(np.abs(st.e))),
                   "lambda_rk_deviation": lam.rk_deviation, "lambda_ode_residual": lam.ode_residual,
                   "xi_rk_deviation": xi.rk_deviation, "norms": {**lam.norms, **xi.norms}})
    if sh.get("bisect", True) or cfg.check:
        width = max(1e-3, 10 * abs(st.e0))
        e_b = shooting_bisection(dim, bj, f, s0, T, lam0, st.e0 - width, st.e0 + width)
        report["e0_bisection"] = e_b
        report["bisection_relative_error"] = abs(e_b - st.e0) / max(abs(st.e0), 1e-300)
    if cfg.check:
        return _checks_report(cfg, {
            "lambda_closed_vs_rk": _entry(lam.rk_deviation < 1e-6, value=lam.rk_deviation),
            "lambda_ode_residual": _entry(lam.ode_residual < 1e-10, value=lam.ode_residual),
            "xi_closed_vs_rk": _entry(xi.rk_deviation < 1e-6, value=xi.rk_deviation),
            "dichotomy_growth": _entry(min(st.growth_plus, st.growth_minus) >= 1e3,
                                       value=[st.growth_plus, st.growth_minus]),
            "bisection_recovers": _entry(report["bisection_relative_error"] < 1e-8,
                                         value=report["bisection_relative_error"]),
        })
    header = ["t", "mu0"] + [f"lambda_{j + 1}" for j in range(k)]
    header += [f"xi_{j + 1}_{i + 1}" for j in range(k) for i in range(n)]
    rows = [[t, m, *lv, *xv.ravel()] for t, m, lv, xv in zip(ts, lam.mu0, lam.lam, xi.xi)]
    if cfg.format == "json":
        _emit(cfg, dumps({"columns": header, "rows": rows, "dichotomy": report}))
        return EXIT_OK
    _emit(cfg, csv_text(header, rows))
    rpath = None if cfg.output is None else str(Path(cfg.output).with_suffix(".report.json"))
    if rpath is None:
        sys.stdout.write(dumps(report))
    else:
        _emit(cfg, dumps(report), rpath)
    return EXIT_OK


# ------------------------------------------------------------------ simulate


def _profile(spec):
    from .pdesim import default_profile

    if spec in (None, "cap"):
        return default_profile
    if isinstance(spec, dict) and spec.get("name") == "gaussian":
        w = float(spec.get("width", 0.1))
        return lambda r: np.exp(-np.asarray(r, dtype=float) ** 2 / (2 * w * w))
    raise ConfigInvalid("unknown-profile", f"profile {spec!r} not recognised")


def _run_csv(rec, dim) -> str:
    mu = rec.mu_proxy(dim)
    return csv_text(["t", "sup_u", "energy", "mu_proxy"],
                    ([float(a), float(b), float(c), float(d)]
                     for a, b, c, d in zip(rec.t, rec.sup_u, rec.energy, mu)))


def _cmd_simulate(cfg: RunConfig) -> int:
    from .pdesim import bisect_threshold, classify_run, initial_state, make_scheme, run, step

    data = _read_json(cfg)
    n = _n_from(cfg, data)
    dim = compute_constants(n)
    scheme = make_scheme(n, R_dom=float(data.get("R_dom", 1.0)), nodes=int(data.get("nodes", 2048)))
    profile = _profile(data.get("profile"))
    if cfg.check:
        zero = step(initial_state(scheme, 0.0, profile))
        _, small = run(initial_state(scheme, 0.01, profile), horizon=50.0)
        return _checks_report(cfg, {
            "zero_fixed_point": _entry(float(np.max(np.abs(zero.u))) == 0.0),
            "small_data_decays": _entry(small.outcome == "decayed", value=small.outcome),
            "energy_monotone": _entry(small.energy_monotone),
        })
    outdir = Path(cfg.output) if cfg.output is not None else None
    horizon = float(data.get("horizon", 50.0))
    if "bisect" in data:
        b = data["bisect"] or {}
        res = bisect_threshold(scheme, profile, depth=int(b.get("depth", 44)),
                               horizon=float(b.get("horizon", horizon)))
        summary = {"n": n, "mode": "bisect", **res.summary()}
        recs = res.runs
    elif "alpha" in data:
        rec = classify_run(float(data["alpha"]), scheme, profile, horizon=horizon)
        summary = {"n": n, "mode": "single", "run": rec.summary()}
        recs = [rec]
    else:
        raise ConfigInvalid("missing-field", "simulate config needs 'alpha' or 'bisect'")
    if outdir is None:
        sys.stdout.write(dumps(summary))
        return EXIT_OK
    outdir.mkdir(parents=True, exist_ok=True)
    for i, rec in enumerate(recs):
        (outdir / f"run_{i:03d}.csv").write_text(_run_csv(rec, dim))
    (outdir / "summary.json").write_text(dumps(summary))
    return EXIT_OK


# ------------------------------------------------------------------ dispatch

_HANDLERS = {
    "constants": _cmd_constants,
    "gmatrix": _cmd_gmatrix,
    "bsolve": _cmd_bsolve,
    "spectrum": _cmd_spectrum,
    "residual": _cmd_residual,
    "dynamics": _cmd_dynamics,
    "simulate": _cmd_simulate,
}


def _error(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"status": "error", "exit_code": code, "error": kind,
                                 "message": message}) + "\n")
    return code


def run(config: RunConfig) -> int:
    """Validate, dispatch and map failures onto exit codes."""
    from .ansatz import ConfigError
    from .dynamics import HorizonError
    from .linop import ResolutionError
    from .pdesim import SchemeError

    try:
        config.validate()
    except KeyError:
        return _error(EXIT_UNKNOWN, "unknown-command", f"unknown command {config.command!r}")
    except ConfigInvalid as exc:
        return _error(EXIT_CONFIG, exc.kind, str(exc))
    try:
        return _HANDLERS[config.command](config)
    except DegenerateConfigurationError as exc:
        return _error(EXIT_CONFIG, "degenerate-configuration", str(exc))
    except NotPositiveDefiniteError as exc:
        return _error(EXIT_CONFIG, "not-positive-definite", str(exc))
    except ConfigInvalid as exc:
        return _error(EXIT_CONFIG, exc.kind, str(exc))
    except (DimensionError, DomainError, ConfigError, HorizonError) as exc:
        return _error(EXIT_CONFIG, "invalid-config", str(exc))
    except (ConvergenceError, ResolutionError, SchemeError, ArithmeticError, FloatingPointError) as exc:
        return _error(EXIT_NUMERIC, "numerical-failure", f"{type(exc).__name__}: {exc}")
    except (ValueError, TypeError) as exc:
        return _error(EXIT_CONFIG, "invalid-config", f"{type(exc).__name__}: {exc}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bubbling", description=__doc__.splitlines()[0])
    ap.add_argument("command", help="one of: " + ", ".join(COMMANDS))
    ap.add_argument("--n", type=int, default=5, help="dimension (n >= 5)")
    ap.add_argument("--input", "-i", help="input JSON")
    ap.add_argument("--output", "-o", help="output file (directory for simulate); stdout if absent")
    ap.add_argument("--format", default=None, choices=("json", "csv"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--check", action="store_true", help="run the invariant suite instead")
    ap.add_argument("--k", type=int, help="gmatrix: number of random points when no input")
    ap.add_argument("--radii", type=float, nargs="+", help="spectrum: coercivity radii")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fmt = args.format or ("csv" if args.command in ("residual", "dynamics") else "json")
    cfg = RunConfig(command=args.command, n=args.n, input=args.input, output=args.output,
                    format=fmt, seed=args.seed, check=args.check,
                    options={"k": args.k, "radii": args.radii})
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
