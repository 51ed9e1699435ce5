"""Figure rendering for the experiment commands.

Figures are a convenience layer next to the CSV outputs; nothing downstream
depends on them and they are skipped under --no-plots.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.dpi": 150,
    "savefig.bbox": "tight",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def kernel_checks_figure(rows, path):
    """Worst error per identity check against time."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    by_check = {}
    for r in rows:
        by_check.setdefault(r["check"], []).append((r["t"], max(r["error"], 1e-18)))
    for name, pts in sorted(by_check.items()):
        pts = sorted(pts)
        ts = [p[0] for p in pts]
        errs = [p[1] for p in pts]
        ax.plot(ts, errs, "o-", label=name, ms=3)
    ax.set_xlabel("t")
    ax.set_ylabel("error")
    ax.set_yscale("log")
    ax.set_xscale("log")
    ax.legend(fontsize=7)
    ax.set_title("heat-kernel identity errors")
    return _save(fig, path)


def bounds_figure(profile_rows, renewal_rows, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    if profile_rows:
        betas = [r["beta"] for r in profile_rows]
        comp = [r["computed"] for r in profile_rows]
        orac = [r["oracle"] for r in profile_rows]
        ax1.loglog(betas, comp, "o-", label="computed integral")
        ax1.loglog(betas, orac, "s--", label="ground-mode oracle")
        ax1.set_xlabel("beta")
        ax1.set_title("growth-weighted diagonal integral blow-up")
        ax1.legend(fontsize=7)
    if renewal_rows:
        for r in renewal_rows:
            ax2.semilogy(r["times"], r["values"], label=f"k*b={r['kb']:g} solved")
            ax2.semilogy(r["times"], r["oracle"], "--", label=f"k*b={r['kb']:g} closed form")
        ax2.set_xlabel("t")
        ax2.set_title("singular renewal growth")
        ax2.legend(fontsize=7)
    return _save(fig, path)


def solution_figure(solutions, x_probe, path):
    """Log center trajectories plus the final spatial profile per noise level."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for lam, sol in solutions:
        vals = sol.values if sol.values.ndim == 2 else np.einsum("tii->ti", sol.values)
        j = int(np.argmin(np.abs(sol.x - x_probe)))
        ax1.semilogy(sol.times, np.maximum(vals[:, j], 1e-300), label=f"lambda={lam:g}")
        ax2.plot(sol.x, vals[-1], label=f"lambda={lam:g}")
    ax1.set_xlabel("t")
    ax1.set_ylabel(f"M(t, x={x_probe:g})")
    ax1.legend(fontsize=7)
    ax2.set_xlabel("x")
    ax2.set_ylabel("M(T, x)")
    ax2.legend(fontsize=7)
    fig.suptitle("second-moment trajectories")
    return _save(fig, path)


def moments_figure(trajs, x_probe, path, volterra=None):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for traj in trajs:
        j = int(np.argmin(np.abs(traj.x - x_probe)))
        m = traj.estimates[:, j]
        e = 2.0 * traj.stderr[:, j]
        ax.errorbar(traj.times, m, yerr=e, fmt="o-", ms=3, capsize=2,
                    label=f"p={traj.p} sample")
    if volterra is not None:
        ax.plot(volterra[0], volterra[1], "k--", label="second-moment equation")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(f"moment at x={x_probe:g}")
    ax.legend(fontsize=7)
    ax.set_title("ensemble moments (bars: 2 SE)")
    return _save(fig, path)


def threshold_figure(scan_rows, bracket, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if scan_rows:
        lams = [r["lambda"] for r in scan_rows]
        rates = [r["rate"] for r in scan_rows]
        ax.plot(lams, rates, "o-", label="fitted rate")
    ax.axhline(0.0, color="k", lw=0.8)
    if bracket is not None:
        ax.axvspan(bracket.lambda_low, bracket.lambda_high, color="orange", alpha=0.3,
                   label="bisection bracket")
        ax.axvline(bracket.spectral_estimate, color="red", ls="--",
                   label="spectral estimate")
    ax.set_xlabel("lambda")
    ax.set_ylabel("rate")
    ax.legend(fontsize=7)
    ax.set_title("noise-level scan")
    return _save(fig, path)
