"""Experiment runner: verify-kernels, bounds, solve, simulate, threshold.

Each command reads one JSON config, writes CSV tables plus a run manifest
into the output directory, renders figures next to them (unless --no-plots),
and exits 0 only if every asserted check passed.  CSV bodies are
byte-reproducible for identical configs and seeds; the leading comment line
carries the version and timestamp and is excluded from that contract.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (RenewalProblem, check_diagonal_growth_integral,
                     check_mass_decay_supremum, check_product_growth_integral,
                     check_product_kernel_floor, check_reflecting_floor,
                     check_square_kernel_floor, mittag_leffler_half, renewal_solve)
from .config import ConfigError, load_config, parse_domain, parse_noise, parse_sigma, parse_u0
from .csvio import write_csv, write_manifest
from .domain import DIRICHLET, NEUMANN, DomainSpec, KernelQuery
from .errors import MomentOverflowError, NoThresholdError
from .estimators import lambda_scan, moment_estimate, rate_fit
from .kernels import kernel_grid, kernel_with_bound
from .simulate import SimConfig, run_ensemble
from .volterra import (MomentProblem, critical_lambda, diagonal_trajectory,
                       lyapunov_rate, picard_solve, solve_second_moment,
                       solve_two_point, spectral_radius_threshold)

SEED_ENV = "SPDELAB_SEED"


class CheckTally:
    def __init__(self):
        self.passed = 0
        self.failed = 0
        self.failures = []

    def record(self, name: str, ok: bool, detail: str = ""):
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            self.failures.append({"check": name, "detail": detail})

    def summary(self) -> dict:
        return {"passed": self.passed, "failed": self.failed, "failures": self.failures}


def _resolve_seed(cfg_seed, flag_seed):
    env = os.environ.get(SEED_ENV)
    effective = cfg_seed
    if flag_seed is not None:
        effective = flag_seed
    if env is not None:
        effective = int(env)
    return effective, {"config": cfg_seed, "flag": flag_seed,
                       "env": int(env) if env is not None else None,
                       "effective": effective}


def _simpson(n, length):
    w = np.full(n + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * length / (3.0 * n)


# ---------------------------------------------------------------------------
# verify-kernels
# ---------------------------------------------------------------------------

def cmd_verify_kernels(cfg, outdir: Path, plots: bool):
    grid = cfg.get("grid", {})
    L = float(grid.get("length", math.pi))
    times = [float(t) for t in grid.get("times", (0.05, 0.2, 0.8, 2.0, 5.0))]
    pts = int(grid.get("points", 9))
    rel_tol = float(grid.get("rel_tol", 1e-7))
    abs_tol = float(grid.get("abs_tol", 1e-10))
    xs = np.linspace(0.0, L, pts + 2)[1:-1]
    tally = CheckTally()
    rows = []

    nq = 512
    zs = np.linspace(0.0, L, nq + 1)
    wq = _simpson(nq, L)
    for boundary in (DIRICHLET, NEUMANN):
        d = DomainSpec(length=L, boundary=boundary)
        for t in times:
            s = 0.5 * t
            A = kernel_grid(d, t, xs, zs)
            B = kernel_grid(d, s, zs, xs)
            lhs = A @ (wq[:, None] * B)
            rhs = kernel_grid(d, t + s, xs, xs)
            err = float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))
            ok = err <= rel_tol
            tally.record(f"chapman_kolmogorov/{boundary}/t={t:g}", ok, f"rel err {err:.2e}")
            rows.append({"check": "chapman_kolmogorov", "boundary": boundary, "t": t,
                         "s": s, "error": err, "tol": rel_tol, "passed": ok})

    d = DomainSpec(length=L, boundary=DIRICHLET)
    dn = DomainSpec(length=L, boundary=NEUMANN)
    for t in times:
        P = kernel_grid(d, t, xs, zs)
        lhs = (P * P) @ wq
        rhs = kernel_grid(d, 2.0 * t, xs, xs).diagonal()
        err = float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))
        ok = err <= rel_tol
        tally.record(f"square_identity/t={t:g}", ok, f"rel err {err:.2e}")
        rows.append({"check": "square_identity", "boundary": DIRICHLET, "t": t, "s": "",
                     "error": err, "tol": rel_tol, "passed": ok})

        gauss = np.exp(-((xs[:, None] - xs[None, :]) ** 2) / (2.0 * t)) / math.sqrt(2 * math.pi * t)
        over = float(np.max(kernel_grid(d, t, xs, xs) - gauss))
        ok = over <= abs_tol
        tally.record(f"absorbing_below_free/t={t:g}", ok, f"excess {over:.2e}")
        rows.append({"check": "absorbing_below_free", "boundary": DIRICHLET, "t": t,
                     "s": "", "error": max(over, 0.0), "tol": abs_tol, "passed": ok})
        under = float(np.max(gauss - kernel_grid(dn, t, xs, xs)))
        ok = under <= abs_tol
        tally.record(f"reflecting_above_free/t={t:g}", ok, f"deficit {under:.2e}")
        rows.append({"check": "reflecting_above_free", "boundary": NEUMANN, "t": t,
                     "s": "", "error": max(under, 0.0), "tol": abs_tol, "passed": ok})

        worst = 0.0
        for x in xs[:: max(1, len(xs) // 4)]:
            for y in xs[:: max(1, len(xs) // 4)]:
                q = KernelQuery(t=t, x=float(x), y=float(y), tolerance=1e-12)
                vi, bi = kernel_with_bound(q, d, method="images")
                vs, bs = kernel_with_bound(q, d, method="series")
                allow = 2.0 * max(bi, bs) + 1e-15
                worst = max(worst, abs(vi - vs) / allow)
        ok = worst <= 1.0
        tally.record(f"dual_representation/t={t:g}", ok, f"bound ratio {worst:.2e}")
        rows.append({"check": "dual_representation", "boundary": DIRICHLET, "t": t,
                     "s": "", "error": worst, "tol": 1.0, "passed": ok})

    out = write_csv(outdir / "kernel_checks.csv",
                    ["check", "boundary", "t", "s", "error", "tol", "passed"], rows)
    outputs = [out]
    if plots:
        from .plots import kernel_checks_figure
        outputs.append(kernel_checks_figure(rows, outdir / "kernel_checks.png"))
    return tally, outputs, {"grid": {"length": L, "times": times, "points": pts}}


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def cmd_bounds(cfg, outdir: Path, plots: bool):
    d = parse_domain(cfg.get("domain", {"length": math.pi}))
    if d.boundary != DIRICHLET:
        raise ConfigError("bounds: domain.boundary must be dirichlet (reflecting checks are built in)")
    dn = DomainSpec(length=d.length, boundary=NEUMANN)
    fracs = [float(f) for f in cfg.get("beta_fractions", (0.5, 0.9, 0.99, 0.999))]
    eps = float(cfg.get("eps_fraction", 0.125)) * d.length
    L, nu1 = d.length, d.nu1
    x0 = L / 2.0
    tally = CheckTally()
    rows, profile_rows = [], []

    def add(report, oracle=None):
        ratio = report.computed_quantity / oracle if oracle else ""
        rows.append({"check_id": report.check_id,
                     "beta": report.parameters.get("beta", ""),
                     "x": report.parameters.get("x", ""),
                     "y1": report.parameters.get("y1", ""),
                     "y2": report.parameters.get("y2", ""),
                     "eps": report.parameters.get("eps", ""),
                     "t_min": report.parameters.get("t_min", ""),
                     "computed": report.computed_quantity,
                     "bound_or_floor": report.bound_or_floor,
                     "satisfied": report.satisfied, "margin": report.margin,
                     "oracle": oracle if oracle is not None else "",
                     "oracle_ratio": ratio})
        return ratio

    e1sq = 2.0 / L * math.sin(math.pi * x0 / L) ** 2
    for f in fracs:
        beta = f * nu1
        rep = check_diagonal_growth_integral(beta, x0, d)
        oracle = e1sq / (nu1 - beta)
        ratio = add(rep, oracle)
        profile_rows.append({"beta": beta, "computed": rep.computed_quantity, "oracle": oracle})
        tally.record(f"diagonal_growth/beta={beta:g}",
                     rep.satisfied and (f < 0.9 or 0.5 <= ratio <= 2.0),
                     f"ratio {ratio}")
    for f in fracs:
        beta = f * nu1
        rep = check_mass_decay_supremum(beta, x0, d)
        add(rep)
        tally.record(f"mass_decay_sup/beta={beta:g}", rep.satisfied,
                     f"sup {rep.computed_quantity:.3e}")
    repn = check_mass_decay_supremum(0.2, x0, dn)
    add(repn)
    tally.record("mass_decay_sup/neumann_unbounded",
                 bool(repn.parameters.get("unbounded")), "expected unbounded flag")

    floors = []
    for beta in (0.5, 1.0, 2.0):
        rep = check_square_kernel_floor(beta, eps, d)
        add(rep)
        floors.append(rep.computed_quantity)
        tally.record(f"square_floor/beta={beta:g}", rep.satisfied,
                     f"floor {rep.computed_quantity:.3e} vs {rep.bound_or_floor:.3e}")
    tally.record("square_floor/monotone_in_beta",
                 floors[0] > floors[1] > floors[2] > 0.0, f"{floors}")

    for t_min in (1e-4, 1.0, L * L):
        rep = check_reflecting_floor(t_min, dn)
        add(rep)
        ok = rep.satisfied and (t_min < L * L or rep.computed_quantity >= 0.5 / L)
        tally.record(f"reflecting_floor/t_min={t_min:g}", ok,
                     f"inf {rep.computed_quantity:.3e}, "
                     f"diag ratio {rep.parameters['diagonal_ratio_min']:.6f}")

    y1, y2 = 0.45 * L, 0.55 * L
    for f in fracs:
        beta = f * 2.0 * nu1
        rep = check_product_growth_integral(beta, x0, y1, y2, d)
        oracle = (2.0 / L * math.sin(math.pi * x0 / L) ** 2) \
            * math.sqrt(2.0 / L) * math.sin(math.pi * y1 / L) \
            * math.sqrt(2.0 / L) * math.sin(math.pi * y2 / L) / (2.0 * nu1 - beta)
        ratio = add(rep, oracle)
        tally.record(f"product_growth/beta={beta:g}",
                     rep.satisfied and (f < 0.9 or 0.5 <= ratio <= 2.0), f"ratio {ratio}")
    rep = check_product_growth_integral(nu1, x0, x0, x0, d)  # diagonal, log-cutoff finite
    add(rep)
    tally.record("product_growth/diagonal_finite", math.isfinite(rep.computed_quantity),
                 f"value {rep.computed_quantity:.3e} (t_floor recorded)")
    rep = check_product_kernel_floor(1.0, eps, d)
    add(rep)
    tally.record("product_floor/beta=1", rep.satisfied, f"floor {rep.computed_quantity:.3e}")

    out1 = write_csv(outdir / "bound_reports.csv",
                     ["check_id", "beta", "x", "y1", "y2", "eps", "t_min", "computed",
                      "bound_or_floor", "satisfied", "margin", "oracle", "oracle_ratio"],
                     rows)

    rn = cfg.get("renewal", {}) or {}
    a = float(rn.get("a", 1.0))
    b = float(rn.get("b", 1.0))
    ks = [float(k) for k in rn.get("k", (0.5, 1.0, 2.0))]
    horizon = float(rn.get("horizon", 10.0))
    step = float(rn.get("step", 1e-3))
    traj_rows, summary_rows, fig_rows = [], [], []
    exponents = {}
    for k in ks:
        sol = renewal_solve(RenewalProblem(a=a, k=k, b=b, horizon=horizon, step=step))
        kb = k * b
        oracle = a * mittag_leffler_half(kb * np.sqrt(math.pi * sol.times))
        sel = np.isfinite(oracle)
        rel = float(np.max(np.abs(sol.values[sel] - oracle[sel]) / oracle[sel]))
        target = math.pi * kb * kb
        exponents[k] = sol.fitted_exponent
        # the closed-form match at 1e-4 is asserted for kb <= 1; larger kb
        # rows feed the exponent scaling checks
        ok = (kb > 1.0 or rel <= 1e-4) and abs(sol.fitted_exponent / target - 1) <= 0.05
        summary_rows.append({"kb": kb, "fitted_exponent": sol.fitted_exponent,
                             "target_exponent": target, "max_rel_err": rel,
                             "passed": ok})
        tally.record(f"renewal/kb={kb:g}", bool(summary_rows[-1]["passed"]),
                     f"rel {rel:.2e}, exp {sol.fitted_exponent:.4f} vs {target:.4f}")
        thin = max(1, len(sol.times) // 200)
        for i in range(0, len(sol.times), thin):
            traj_rows.append({"kb": kb, "t": sol.times[i], "f": sol.values[i],
                              "oracle": oracle[i]})
        fig_rows.append({"kb": kb, "times": sol.times[::thin], "values": sol.values[::thin],
                         "oracle": oracle[::thin]})
    if len(ks) >= 2:
        pairs = [(k1, k2) for k1, k2 in zip(ks, ks[1:]) if abs(k2 / k1 - 2.0) < 1e-12]
        for k1, k2 in pairs:
            r = exponents[k2] / exponents[k1]
            tally.record(f"renewal/exponent_ratio_{k1:g}_to_{k2:g}",
                         abs(r / 4.0 - 1.0) <= 0.05, f"ratio {r:.3f}")
    out2 = write_csv(outdir / "renewal_trajectories.csv", ["kb", "t", "f", "oracle"], traj_rows)
    out3 = write_csv(outdir / "renewal_summary.csv",
                     ["kb", "fitted_exponent", "target_exponent", "max_rel_err", "passed"],
                     summary_rows)
    outputs = [out1, out2, out3]
    if plots:
        from .plots import bounds_figure
        outputs.append(bounds_figure(profile_rows, fig_rows, outdir / "bounds.png"))
    return tally, outputs, {"eps": eps, "beta_fractions": fracs}


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def cmd_solve(cfg, outdir: Path, plots: bool):
    d = parse_domain(cfg["domain"])
    noise = parse_noise(cfg.get("noise"))
    u0 = parse_u0(cfg.get("u0"), d.length)
    lambdas = [float(v) for v in cfg.get("lambdas", (1.0,))]
    equation = cfg.get("equation", "second-moment")
    horizon = float(cfg.get("horizon", 10.0))
    nodes = int(cfg.get("nodes", 64))
    dt = float(cfg.get("dt", horizon / 400.0))
    window = float(cfg.get("rate_window", 0.4))
    slope = float(cfg.get("sigma_slope", 1.0))
    tally = CheckTally()
    sol_rows, rate_rows, solutions = [], [], []

    for lam in lambdas:
        p = MomentProblem(domain=d, u0=u0, lam=lam, sigma_slope=slope, noise=noise,
                          horizon=horizon, nodes=nodes, dt=dt)
        truncated = False
        try:
            if equation == "second-moment":
                sol = solve_second_moment(p)
            elif equation == "two-point":
                sol = solve_two_point(p)
            else:
                raise ConfigError(f"unknown equation {equation!r}")
        except MomentOverflowError as e:
            sol = e.partial
            truncated = True
        solutions.append((lam, sol))
        thin = max(1, (len(sol.times) - 1) // 50)
        if sol.is_two_point:
            for i in range(0, len(sol.times), thin):
                for jx, xv in enumerate(sol.x):
                    for jy in range(jx, len(sol.x)):
                        sol_rows.append((lam, sol.times[i], xv, sol.x[jy],
                                         sol.values[i, jx, jy]))
            traj = diagonal_trajectory(sol)
        else:
            for i in range(0, len(sol.times), thin):
                for jx, xv in enumerate(sol.x):
                    sol_rows.append((lam, sol.times[i], xv, sol.values[i, jx]))
            traj = sol
        try:
            fit = lyapunov_rate(traj, d.length / 2.0, window)
            rate, resid = fit.rate, fit.residual
        except Exception as e:  # noqa: BLE001 - rate may be unavailable on truncation
            rate, resid = math.nan, math.nan
            tally.record(f"rate/lambda={lam:g}", truncated, f"rate fit failed: {e}")
        rate_rows.append({"lambda": lam, "mu": d.drift, "boundary": d.boundary,
                          "rate": rate, "residual": resid, "truncated": truncated})
        if cfg.get("picard_check") and equation == "second-moment" and not truncated:
            pic = picard_solve(p)
            rel = float(np.max(np.abs(pic.values - sol.values)
                               / np.maximum(np.abs(sol.values), 1e-30)))
            tally.record(f"picard/lambda={lam:g}", rel <= 1e-3
                         or bool(pic.meta.get("diverging")), f"rel {rel:.2e}")

    if equation == "two-point":
        out1 = write_csv(outdir / "solution.csv", ["lambda", "t", "x1", "x2", "M"], sol_rows)
    else:
        out1 = write_csv(outdir / "solution.csv", ["lambda", "t", "x", "M"], sol_rows)
    out2 = write_csv(outdir / "rates.csv",
                     ["lambda", "mu", "boundary", "rate", "residual", "truncated"],
                     rate_rows)
    outputs = [out1, out2]
    if plots:
        from .plots import solution_figure
        outputs.append(solution_figure(solutions, d.length / 2.0, outdir / "solve.png"))
    return tally, outputs, {"equation": equation, "lambdas": lambdas}


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(cfg, outdir: Path, plots: bool, paths_flag=None, seed_flag=None):
    d = parse_domain(cfg["domain"])
    noise = parse_noise(cfg.get("noise"))
    sigma = parse_sigma(cfg.get("sigma"))
    u0 = parse_u0(cfg.get("u0"), d.length)
    seed, seed_info = _resolve_seed(int(cfg["seed"]), seed_flag)
    paths = int(paths_flag if paths_flag is not None else cfg.get("paths", 1000))
    moments = tuple(int(p) for p in cfg.get("moments", (2,)))
    sim = SimConfig(domain=d, u0=u0, lam=float(cfg["lambda"]), sigma=sigma, noise=noise,
                    nodes=int(cfg.get("nodes", 64)), dt=float(cfg["dt"]),
                    horizon=float(cfg["horizon"]),
                    snapshot_times=tuple(float(t) for t in cfg["snapshots"]),
                    master_seed=seed)
    tally = CheckTally()
    acc = run_ensemble(sim, paths, moments=moments)
    acc_rows, mom_rows = [], []
    trajs = []
    for p in acc.orders:
        traj = moment_estimate(acc, p)
        trajs.append(traj)
        for i, t in enumerate(acc.times):
            for j, x in enumerate(acc.x):
                acc_rows.append((t, x, p, acc.sums[p][i, j], acc.sumsq[p][i, j],
                                 acc.count, acc.excluded))
                mom_rows.append((t, x, p, traj.estimates[i, j], traj.stderr[i, j]))
    out1 = write_csv(outdir / "accumulators.csv",
                     ["t", "x", "p", "sum", "sumsq", "count", "excluded"], acc_rows)
    out2 = write_csv(outdir / "moments.csv", ["t", "x", "p", "estimate", "stderr"], mom_rows)
    outputs = [out1, out2]

    rate_rows = []
    if len(acc.times) >= 20:
        for traj in trajs:
            try:
                est = rate_fit(traj, d.length / 2.0)
                rate_rows.append({"lambda": sim.lam, "mu": d.drift, "boundary": d.boundary,
                                  "p": traj.p, "x": d.length / 2.0, "rate": est.rate,
                                  "ci_low": est.ci_low, "ci_high": est.ci_high, "r2": est.r2})
            except Exception:  # noqa: BLE001 - nonpositive cells leave no rate
                pass
    if rate_rows:
        outputs.append(write_csv(outdir / "rates.csv",
                                 ["lambda", "mu", "boundary", "p", "x", "rate",
                                  "ci_low", "ci_high", "r2"], rate_rows))

    dump = int(cfg.get("dump_paths", 0))
    if dump > 0:
        from .simulate import run_path
        snap_rows = []
        for i in range(dump):
            res = run_path(sim, i)
            for ti, t in enumerate(res.times):
                for j, x in enumerate(acc.x):
                    snap_rows.append((i, t, x, res.snapshots[ti, j]))
        outputs.append(write_csv(outdir / "snapshots.csv", ["path", "t", "x", "u"], snap_rows))

    tally.record("ensemble/completed", True,
                 f"{acc.count} included, {acc.excluded} excluded")
    if plots:
        from .plots import moments_figure
        outputs.append(moments_figure(trajs, d.length / 2.0, outdir / "simulate.png"))
    return tally, outputs, {"paths": paths, "seed": seed_info,
                            "excluded": acc.excluded}


# ---------------------------------------------------------------------------
# threshold
# ---------------------------------------------------------------------------

def cmd_threshold(cfg, outdir: Path, plots: bool, paths_flag=None, seed_flag=None):
    d = parse_domain(cfg["domain"])
    u0 = parse_u0(cfg.get("u0"), d.length)
    horizon = float(cfg.get("horizon", 10.0))
    nodes = int(cfg.get("nodes", 64))
    dt = float(cfg.get("dt", horizon / 400.0))
    bracket = tuple(float(v) for v in cfg.get("bracket", (0.5, 3.0)))
    tally = CheckTally()
    p = MomentProblem(domain=d, u0=u0, lam=1.0, horizon=horizon, nodes=nodes, dt=dt)
    rows = []
    bk = None
    try:
        bk = critical_lambda(p, bracket=bracket)
        agree = abs(bk.lambda_crit - bk.spectral_estimate) / bk.spectral_estimate
        tally.record("threshold/bisection_vs_spectral", agree <= 0.05,
                     f"{agree * 100:.2f}% apart")
        rows.append({"boundary": d.boundary, "mu": d.drift, "outcome": "bracketed",
                     "lambda_low": bk.lambda_low, "lambda_high": bk.lambda_high,
                     "lambda_crit": bk.lambda_crit, "spectral_estimate": bk.spectral_estimate,
                     "rate_low": bk.rate_low, "rate_high": bk.rate_high})
    except NoThresholdError as e:
        expected = d.boundary == NEUMANN
        tally.record("threshold/no_threshold_outcome", expected, str(e))
        rows.append({"boundary": d.boundary, "mu": d.drift, "outcome": "no_threshold",
                     "lambda_low": "", "lambda_high": "", "lambda_crit": "",
                     "spectral_estimate": "", "rate_low": "", "rate_high": ""})
    out1 = write_csv(outdir / "threshold.csv",
                     ["boundary", "mu", "outcome", "lambda_low", "lambda_high",
                      "lambda_crit", "spectral_estimate", "rate_low", "rate_high"], rows)
    outputs = [out1]

    scan_rows = []
    lambdas = [float(v) for v in cfg.get("scan_lambdas", ())]
    seed_info = None
    paths = int(paths_flag if paths_flag is not None else cfg.get("paths", 0))
    if lambdas:
        for lam in lambdas:
            pp = replace(p, lam=lam)
            try:
                sol = solve_second_moment(pp)
                fit = lyapunov_rate(sol, d.length / 2.0)
                rate, resid = fit.rate, fit.residual
            except MomentOverflowError:
                rate, resid = math.inf, math.nan
            scan_rows.append({"lambda": lam, "mu": d.drift, "boundary": d.boundary,
                              "p": 2, "x": d.length / 2.0, "rate": rate,
                              "ci_low": "", "ci_high": "", "r2": "",
                              "source": "volterra"})
        if paths > 0:
            seed, seed_info = _resolve_seed(int(cfg["seed"]), seed_flag)
            h = d.length / nodes
            sim = SimConfig(domain=d, u0=u0, lam=lambdas[0],
                            nodes=nodes, dt=float(cfg.get("sim_dt", 0.5 * h * h)),
                            horizon=horizon,
                            snapshot_times=tuple(float(t) for t in cfg["snapshots"]),
                            master_seed=seed)
            mc_rows, _brackets = lambda_scan(sim, lambdas, paths)
            for r in mc_rows:
                r["source"] = "monte-carlo"
                scan_rows.append(r)
        outputs.append(write_csv(outdir / "scan.csv",
                                 ["lambda", "mu", "boundary", "p", "x", "rate",
                                  "ci_low", "ci_high", "r2", "source"], scan_rows))
    if plots:
        from .plots import threshold_figure
        det_rows = [r for r in scan_rows if r.get("source") == "volterra"
                    and math.isfinite(r["rate"])]
        outputs.append(threshold_figure(det_rows, bk, outdir / "threshold.png"))
    return tally, outputs, {"bracket": list(bracket), "seed": seed_info}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spdelab",
        description="moment behaviour of stochastic heat equations on an interval")
    parser.add_argument("--version", action="version", version=f"spdelab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("verify-kernels", "bounds", "solve", "simulate", "threshold"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", default=None, help="output directory (default: config's 'out' or cwd)")
        sp.add_argument("--paths", type=int, default=None, help="override path count")
        sp.add_argument("--seed", type=int, default=None, help="override master seed")
        sp.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if cfg["command"] != args.command:
        print(f"config error: config is for {cfg['command']!r}, invoked {args.command!r}",
              file=sys.stderr)
        return 2
    outdir = Path(args.out or cfg.get("out") or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    plots = not args.no_plots

    try:
        if args.command == "verify-kernels":
            tally, outputs, extra = cmd_verify_kernels(cfg, outdir, plots)
        elif args.command == "bounds":
            tally, outputs, extra = cmd_bounds(cfg, outdir, plots)
        elif args.command == "solve":
            tally, outputs, extra = cmd_solve(cfg, outdir, plots)
        elif args.command == "simulate":
            tally, outputs, extra = cmd_simulate(cfg, outdir, plots,
                                                 paths_flag=args.paths, seed_flag=args.seed)
        else:
            tally, outputs, extra = cmd_threshold(cfg, outdir, plots,
                                                  paths_flag=args.paths, seed_flag=args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    seed_info = extra.get("seed") if isinstance(extra, dict) else None
    manifest = write_manifest(outdir / "run_manifest.json", args.command, cfg,
                              seed_info, outputs, tally.summary())
    outputs.append(manifest)
    for f in tally.failures:
        print(f"FAIL {f['check']}: {f['detail']}", file=sys.stderr)
    print(f"{args.command}: {tally.passed} passed, {tally.failed} failed; "
          f"outputs in {outdir}")
    return 0 if tally.failed == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
