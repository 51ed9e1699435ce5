"""Observables from raw ensemble accumulators.

Sample moments with standard errors, squared-norm energy with delta-method
errors, weighted least-squares rate fits of log-moments with confidence
intervals, and noise-level scans that bracket a sign change of the fitted
rate.  Snapshot estimates are treated as independent across time when forming
rate CIs, an approximation mitigated by spacing snapshots well apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .domain import DomainSpec
from .errors import WindowError
from .simulate import EnsembleAccumulators, SimConfig, iter_path_groups, run_ensemble


@dataclass
class MomentTrajectory:
    p: int
    times: np.ndarray
    x: np.ndarray
    estimates: np.ndarray      # (n_times, n_nodes)
    stderr: np.ndarray
    count: int
    excluded: int


@dataclass
class RateEstimate:
    rate: float
    ci_low: float
    ci_high: float
    window: tuple
    r2: float
    n_points: int


@dataclass
class EnergyTrajectory:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray


def moment_estimate(acc: EnsembleAccumulators, p: int) -> MomentTrajectory:
    """Sample mean of |u|^p per (snapshot, node) with unbiased standard errors."""
    if p not in acc.orders:
        raise ValueError(f"order {p} was not accumulated (have {acc.orders})")
    n = acc.count
    if n < 2:
        raise ValueError("need at least 2 included paths")
    mean = acc.sums[p] / n
    var = np.maximum(acc.sumsq[p] - n * mean * mean, 0.0) / (n - 1)
    return MomentTrajectory(p=p, times=acc.times, x=acc.x, estimates=mean,
                            stderr=np.sqrt(var / n), count=n, excluded=acc.excluded)


def energy_estimate(acc: EnsembleAccumulators, d: DomainSpec) -> EnergyTrajectory:
    """sqrt of the trapezoid-integrated second moment, per snapshot."""
    traj = moment_estimate(acc, 2)
    w = np.full(len(acc.x), acc.x[1] - acc.x[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    sq = traj.estimates @ w
    sq_err = np.sqrt((traj.stderr ** 2) @ (w ** 2))
    vals = np.sqrt(sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.where(vals > 0, sq_err / (2.0 * vals), np.inf)
    return EnergyTrajectory(times=acc.times, values=vals, stderr=err)


def energy_of_solution(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Deterministic energy sqrt(int M(t, x) dx) of a grid moment solution."""
    w = np.full(len(x), x[1] - x[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.sqrt(values @ w)


def rate_fit(traj: MomentTrajectory, x: float, window: float = 0.6) -> RateEstimate:
    """Weighted LS slope of log estimates over the trailing window fraction.

    Weights come from the delta method, var(log m) ~ (stderr/m)^2; the CI is
    the 95% interval of the weighted linear model.
    """
    j = int(np.argmin(np.abs(traj.x - x)))
    t_all = traj.times
    lo = t_all[-1] - window * (t_all[-1] - t_all[0])
    mask = t_all >= lo - 1e-12
    t = t_all[mask]
    m = traj.estimates[mask, j]
    se = traj.stderr[mask, j]
    ok = np.isfinite(m) & (m > 0)
    if ok.sum() < 20:
        raise WindowError(f"rate window has {int(ok.sum())} positive points; need >= 20")
    t, m, se = t[ok], m[ok], se[ok]
    y = np.log(m)
    rel = np.where(m > 0, se / m, np.inf)
    wts = 1.0 / np.maximum(rel, 1e-12) ** 2
    wts /= wts.max()
    X = np.column_stack([t, np.ones_like(t)])
    W = wts
    XtWX = X.T @ (W[:, None] * X)
    XtWy = X.T @ (W * y)
    beta = np.linalg.solve(XtWX, XtWy)
    resid = y - X @ beta
    dof = len(t) - 2
    s2 = float((W * resid ** 2).sum() / max(dof, 1))
    cov = s2 * np.linalg.inv(XtWX)
    half = stats.t.ppf(0.975, max(dof, 1)) * math.sqrt(max(cov[0, 0], 0.0))
    ybar = float((W * y).sum() / W.sum())
    ss_tot = float((W * (y - ybar) ** 2).sum())
    r2 = 1.0 - float((W * resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return RateEstimate(rate=float(beta[0]), ci_low=float(beta[0] - half),
                        ci_high=float(beta[0] + half),
                        window=(float(t[0]), float(t[-1])), r2=r2, n_points=len(t))


def lambda_scan(base_cfg: SimConfig, lambdas, paths: int, p_orders: tuple = (2,),
                x: float | None = None, window: float = 1.0):
    """Fitted rates per (lambda, p) from common-random-number ensembles.

    Returns (rows, brackets): rows are dicts ready for tabulation, brackets
    maps p to (lambda_low, lambda_high) around the rate sign change, or None
    when every rate has one sign (reflecting-type outcome, not an error).
    """
    lams = [float(v) for v in lambdas]
    if lams != sorted(lams):
        raise ValueError("lambda values must be sorted ascending")
    if x is None:
        x = base_cfg.domain.length / 2.0
    rows = []
    rates = {p: [] for p in p_orders}
    for lam in lams:
        acc = run_ensemble(replace(base_cfg, lam=lam), paths, moments=p_orders)
        for p in p_orders:
            est = rate_fit(moment_estimate(acc, p), x, window=window)
            rates[p].append(est.rate)
            rows.append({"lambda": lam, "mu": base_cfg.domain.drift,
                         "boundary": base_cfg.domain.boundary, "p": p, "x": x,
                         "rate": est.rate, "ci_low": est.ci_low,
                         "ci_high": est.ci_high, "r2": est.r2,
                         "excluded": acc.excluded})
    brackets = {}
    for p in p_orders:
        r = rates[p]
        neg = [lam for lam, v in zip(lams, r) if v < 0]
        pos = [lam for lam, v in zip(lams, r) if v > 0]
        if neg and pos and max(neg) < min(pos):
            brackets[p] = (max(neg), min(pos))
        else:
            brackets[p] = None
    return rows, brackets


@dataclass
class PairedDifference:
    """Common-random-number comparison of |u|^p between two noise levels.

    mean and stderr describe (|u_high|^p - |u_low|^p) per (snapshot, node)
    over paths driven by identical increments; pairs where either run blew up
    are dropped.
    """

    p: int
    times: np.ndarray
    x: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    count: int
    excluded: int


def paired_moment_difference(base_cfg: SimConfig, lam_low: float, lam_high: float,
                             paths: int, p_orders: tuple = (2,)) -> dict:
    """March both noise levels on shared increments and pair the moments."""
    if lam_high <= lam_low:
        raise ValueError("need lam_low < lam_high")
    cfg_lo = replace(base_cfg, lam=lam_low)
    cfg_hi = replace(base_cfg, lam=lam_high)
    ns = len(base_cfg.snapshot_steps())
    nn = base_cfg.nodes + 1
    sums = {p: np.zeros((ns, nn)) for p in p_orders}
    sumsq = {p: np.zeros((ns, nn)) for p in p_orders}
    count = 0
    excluded = 0
    for (gl, gh) in zip(iter_path_groups(cfg_lo, paths), iter_path_groups(cfg_hi, paths)):
        _, snaps_lo, blown_lo = gl
        _, snaps_hi, blown_hi = gh
        ok = ~(blown_lo | blown_hi)
        excluded += int((~ok).sum())
        count += int(ok.sum())
        for p in p_orders:
            diff = np.abs(snaps_hi[ok]) ** p - np.abs(snaps_lo[ok]) ** p
            sums[p] += diff.sum(axis=0)
            sumsq[p] += (diff * diff).sum(axis=0)
    out = {}
    for p in p_orders:
        mean = sums[p] / count
        var = np.maximum(sumsq[p] - count * mean * mean, 0.0) / (count - 1)
        out[p] = PairedDifference(p=p, times=base_cfg.snapshot_steps() * base_cfg.dt,
                                  x=base_cfg.grid(), mean=mean,
                                  stderr=np.sqrt(var / count),
                                  count=count, excluded=excluded)
    return out
