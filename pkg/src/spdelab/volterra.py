"""Deterministic solvers for the closed moment equations.

Second moment, space-time white noise, slope s folded next to lambda:

    M(t,x) = g(t,x)^2 + (lambda s)^2 int_0^t int_0^L p(t-s,x,y)^2 M(s,y) dy ds

with g the deterministic semigroup of the initial profile.  The squared
kernel integrates in space to p(2 tau, x, x) ~ 1/(2 sqrt(pi tau)) on the
diagonal, so the time convolution carries a 1/sqrt(tau) singularity; it is
handled by product integration (exact moments of tau^(-1/2) against a
piecewise-linear interpolant), with Simpson quadrature in space.

Two-point function, noise white in time with spatial covariance f, d = 1:

    M(t,x1,x2) = g(t,x1) g(t,x2)
        + (lambda s)^2 int int int p(t-s,x1,y1) p(t-s,x2,y2) f(y1-y2) M(s,y1,y2)

whose kernel is bounded for bounded f, so a trapezoid rule in time suffices;
the semigroup factors are applied in the eigenbasis to keep small-time kernel
spikes resolved on coarse grids.

Rates come from least-squares slopes of log M over a trailing window; the
critical noise level is located twice, by bisection on the rate sign and by
the spectral radius of the squared-kernel resolvent operator.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import _half_weights
from .domain import (DIRICHLET, NEUMANN, DomainSpec, InitialCondition,
                     NoiseSpec, SpectralBasis, covariance_matrix)
from .errors import MomentOverflowError, NoThresholdError, ResolutionError, WindowError
from .kernels import SemigroupExpansion, diagonal_prefactor, kernel_grid

_TWO_SQRT_PI = 2.0 * math.sqrt(math.pi)

# fitted slopes smaller than this are treated as sign-unresolved (nonnegative)
RATE_SIGN_FLOOR = 1e-5


@dataclass(frozen=True)
class MomentProblem:
    """One moment-equation instance on the solver grid."""

    domain: DomainSpec
    u0: InitialCondition
    lam: float
    sigma_slope: float = 1.0
    noise: NoiseSpec = NoiseSpec(kind="white")
    horizon: float = 10.0
    nodes: int = 64
    dt: float = 0.025

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.sigma_slope <= 0:
            raise ValueError("sigma_slope must be positive")
        if self.nodes < 16 or self.nodes % 2:
            raise ValueError("nodes must be an even integer >= 16")
        if not (0 < self.dt <= self.horizon / 200.0):
            raise ValueError("need 0 < dt <= horizon/200")


@dataclass
class VolterraSolution:
    """Grid solution; values has shape (nt, nx) or (nt, nx, nx) for pairs."""

    times: np.ndarray
    x: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def is_two_point(self) -> bool:
        return self.values.ndim == 3


@dataclass
class RateFit:
    rate: float
    residual: float
    window: tuple
    n_points: int


@dataclass
class ThresholdBracket:
    lambda_low: float
    lambda_high: float
    lambda_crit: float
    spectral_estimate: float
    rate_low: float = math.nan
    rate_high: float = math.nan


def _simpson_weights(n: int, length: float) -> np.ndarray:
    w = np.full(n + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * length / (3.0 * n)


# cache of assembled marching operators keyed by the grid and domain
_OP_CACHE: OrderedDict = OrderedDict()
_OP_CACHE_SLOTS = 3


class _MarchOperator:
    """Product-integration form of the squared-kernel time convolution.

    psi[m] = sqrt(tau_m) e^{2 mu tau_m} p(tau_m, x_i, x_j)^2 S_j is the smooth
    part of the kernel after extracting tau^(-1/2); combined[m] are the nodal
    weights of the exact tau^(-1/2)-against-hats rule.  The per-step
    contraction sum_{m=1..k} combined[m] psi[m] @ M[k-m] is stored
    (m, j)-major so each step is one BLAS vector-matrix product.
    """

    def __init__(self, d: DomainSpec, n: int, dt: float, n_steps: int):
        base = DomainSpec(length=d.length, boundary=d.boundary)  # kernels carry no drift
        xs = np.linspace(0.0, d.length, n + 1)
        sw = _simpson_weights(n, d.length)
        left, right = _half_weights(n_steps, dt)
        combined = np.empty(n_steps + 1)
        combined[0] = left[0]
        combined[1:] = right[:n_steps].copy()
        combined[1:n_steps] += left[1:n_steps]
        self.n = n
        self.n_steps = n_steps
        self.combined = combined
        self.left_pad = np.append(left, 0.0)
        self.diag0 = diagonal_prefactor(d, xs) / _TWO_SQRT_PI  # tau -> 0 delta limit
        psi_t = np.empty((n_steps + 1, n + 1, n + 1))
        psi_t[0] = 0.0
        for m in range(1, n_steps + 1):
            tau = m * dt
            P = kernel_grid(base, tau, xs, xs)
            scale = math.sqrt(tau) * math.exp(2.0 * d.drift * tau) * combined[m]
            psi_t[m] = (scale * (P * P) * sw[None, :]).T  # (j, i) within the block
        self.rows = np.ascontiguousarray(psi_t).reshape((n_steps + 1) * (n + 1), n + 1)

    def block(self, m: int) -> np.ndarray:
        """combined[m] * psi[m], transposed: rows j, columns i."""
        w = self.n + 1
        return self.rows[m * w:(m + 1) * w]

    def convolve(self, k: int, history: np.ndarray) -> np.ndarray:
        """sum_{m=1..k} weights * psi[m] @ history[k-m], with the m=k node
        reweighted from combined[k] to right[k-1]."""
        w = self.n + 1
        flat = history[k - 1::-1].reshape(-1)
        conv = flat @ self.rows[w:(k + 1) * w]
        if self.left_pad[k] != 0.0:
            conv -= (self.left_pad[k] / self.combined[k]) * (history[0] @ self.block(k))
        return conv


def _march_operator(d: DomainSpec, n: int, dt: float, n_steps: int) -> _MarchOperator:
    key = (round(d.length, 12), d.boundary, round(d.drift, 12), n, round(dt, 15), n_steps)
    if key in _OP_CACHE:
        _OP_CACHE.move_to_end(key)
        return _OP_CACHE[key]
    op = _MarchOperator(d, n, dt, n_steps)
    while len(_OP_CACHE) >= _OP_CACHE_SLOTS:
        _OP_CACHE.popitem(last=False)
    _OP_CACHE[key] = op
    return op


def _grid(p: MomentProblem):
    n_steps = int(round(p.horizon / p.dt))
    times = np.arange(n_steps + 1) * p.dt
    xs = np.linspace(0.0, p.domain.length, p.nodes + 1)
    return n_steps, times, xs


def _forcing(p: MomentProblem, times, xs) -> np.ndarray:
    g = SemigroupExpansion(p.u0, p.domain)(times, xs)
    if p.domain.boundary == DIRICHLET:
        g[:, 0] = 0.0
        g[:, -1] = 0.0
    return g * g


def stable_dt(lam: float, sigma_slope: float = 1.0, target: float = 0.35,
              reflecting: bool = False) -> float:
    """Largest dt keeping the implicit product-integration factor below target."""
    coeff = (lam * sigma_slope) ** 2
    if coeff == 0.0:
        return math.inf
    kappa = 2.0 if reflecting else 1.0
    root = target * _TWO_SQRT_PI / (coeff * (4.0 / 3.0) * kappa)
    return root * root


def solve_second_moment(p: MomentProblem) -> VolterraSolution:
    """March the white-noise second-moment equation on the grid.

    All product-integration weights and kernel values are nonnegative, so the
    output is nonnegative and pointwise nondecreasing in lambda^2 on a fixed
    grid.  Raises ResolutionError when the implicit diagonal factor reaches 1
    and MomentOverflowError (carrying the partial solution) on overflow.
    """
    if p.noise.kind != "white":
        raise ValueError("solve_second_moment handles white noise; use solve_two_point")
    n_steps, times, xs = _grid(p)
    coeff = (p.lam * p.sigma_slope) ** 2
    G2 = _forcing(p, times, xs)
    M = np.empty_like(G2)
    M[0] = G2[0]
    if coeff == 0.0:
        M[:] = G2
        return VolterraSolution(times, xs, M, meta=_meta(p, 0.0))

    op = _march_operator(p.domain, p.nodes, p.dt, n_steps)
    implicit = coeff * op.combined[0] * op.diag0  # per-node scalar factor
    factor = float(implicit.max())
    if factor >= 0.9:
        raise ResolutionError(
            f"dt={p.dt:g} too coarse at lambda*s={p.lam * p.sigma_slope:g}: "
            f"implicit factor {factor:.3f} (need < 0.9; see stable_dt)")
    denom = 1.0 - implicit

    absorbing = p.domain.boundary == DIRICHLET
    for k in range(1, n_steps + 1):
        conv = op.convolve(k, M)
        M[k] = (G2[k] + coeff * conv) / denom
        if absorbing:  # keep the pinned rows free of convolution rounding dust
            M[k, 0] = 0.0
            M[k, -1] = 0.0
        peak = M[k].max()
        if not np.isfinite(peak) or peak > 1e290:
            partial = VolterraSolution(times[:k], xs, M[:k].copy(), meta=_meta(p, factor))
            raise MomentOverflowError(
                f"second moment overflowed at t={times[k]:g}", partial=partial)
    return VolterraSolution(times, xs, M, meta=_meta(p, factor))


def _meta(p: MomentProblem, factor: float) -> dict:
    return {"dt": p.dt, "nodes": p.nodes, "lambda": p.lam, "sigma_slope": p.sigma_slope,
            "boundary": p.domain.boundary, "drift": p.domain.drift,
            "implicit_factor": factor,
            "time_rule": "product integration, piecewise-linear in tau^(-1/2)",
            "space_rule": "composite simpson"}


def picard_solve(p: MomentProblem, iterations: int = 25) -> VolterraSolution:
    """Fixed-point iterates of the same discrete moment equation.

    Seeds with the squared semigroup and applies the integral operator
    explicitly (no implicit diagonal solve), so agreement with the marching
    solver checks the forward-substitution algebra.  Successive-difference
    norms land in meta["residuals"]; divergence is reported, not raised.
    """
    if p.noise.kind != "white":
        raise ValueError("picard_solve handles the white-noise second moment")
    n_steps, times, xs = _grid(p)
    coeff = (p.lam * p.sigma_slope) ** 2
    G2 = _forcing(p, times, xs)
    op = _march_operator(p.domain, p.nodes, p.dt, n_steps)
    diag0 = op.combined[0] * op.diag0

    absorbing = p.domain.boundary == DIRICHLET

    def apply_operator(M):
        out = np.empty_like(M)
        out[0] = 0.0
        for k in range(1, n_steps + 1):
            out[k] = op.convolve(k, M) + diag0 * M[k]
        if absorbing:
            out[:, 0] = 0.0
            out[:, -1] = 0.0
        return out

    ones = np.ones_like(G2)
    norm_estimate = coeff * float(apply_operator(ones).max())
    M = G2.copy()
    residuals = []
    for _ in range(iterations):
        nxt = G2 + coeff * apply_operator(M)
        residuals.append(float(np.max(np.abs(nxt - M))))
        M = nxt
        if residuals[-1] == 0.0:
            break
    meta = _meta(p, math.nan)
    meta.update(residuals=residuals, operator_norm_estimate=norm_estimate,
                contraction=norm_estimate < 1.0,
                diverging=len(residuals) > 2 and residuals[-1] > residuals[-2] > residuals[-3])
    return VolterraSolution(times, xs, M, meta=meta)


# ---------------------------------------------------------------------------
# rates and thresholds
# ---------------------------------------------------------------------------

def lyapunov_rate(sol: VolterraSolution, x: float, window: float = 0.4) -> RateFit:
    """Least-squares slope of log M(., x) over the trailing window fraction.

    Discards points below 1e-3 of the window maximum and an unstable-slope
    prefix (local slope off the median by more than 10%), then fits; the RMS
    log-residual is the regime-entry diagnostic.
    """
    if sol.is_two_point:
        raise ValueError("pass a diagonal trajectory (see diagonal_trajectory)")
    j = int(np.argmin(np.abs(sol.x - x)))
    t_end = sol.times[-1]
    mask = sol.times >= t_end - window * (sol.times[-1] - sol.times[0])
    t = sol.times[mask]
    v = sol.values[mask, j]
    if len(t) < 20:
        raise WindowError(f"window holds {len(t)} points; need >= 20")
    if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        raise WindowError("window contains nonpositive or overflowed values")
    keep = v >= 1e-3 * v.max()
    t, v = t[keep], v[keep]
    y = np.log(v)
    slopes = np.diff(y) / np.diff(t)
    med = float(np.median(slopes[len(slopes) // 2:]))
    band = max(0.1 * abs(med), 1e-4)
    start = 0
    off = np.abs(slopes - med) > band
    if off.any():
        last_bad = int(np.nonzero(off)[0][-1])
        if len(t) - (last_bad + 1) >= 10:
            start = last_bad + 1
    tf, yf = t[start:], y[start:]
    coeffs = np.polyfit(tf, yf, 1)
    resid = yf - np.polyval(coeffs, tf)
    return RateFit(rate=float(coeffs[0]),
                   residual=float(np.sqrt(np.mean(resid ** 2))),
                   window=(float(tf[0]), float(tf[-1])), n_points=len(tf))


def diagonal_trajectory(sol: VolterraSolution) -> VolterraSolution:
    """Diagonal M(t, x, x) of a two-point solution as an ordinary trajectory."""
    if not sol.is_two_point:
        raise ValueError("solution is not two-point")
    diag = np.einsum('tii->ti', sol.values)
    return VolterraSolution(sol.times, sol.x, diag.copy(), meta=dict(sol.meta))


def spectral_radius_threshold(p: MomentProblem, modes: int = 256):
    """Threshold estimate lambda_c = rho^{-1/2} / s from the resolvent operator.

    The operator kernel int_0^inf e^{2 mu tau} p_D(tau,x,y)^2 dtau expands in
    eigenmodes as sum_{m,n} e_m e_n (x) e_m e_n (y) / (nu_m + nu_n - 2 mu),
    assembled exactly and power-iterated with Simpson inner products.
    """
    d = p.domain
    if d.boundary != DIRICHLET:
        raise NoThresholdError("reflecting boundary: kernel mass never decays, no threshold")
    if d.drift >= d.nu1:
        raise ValueError("drift must stay below nu1 for the resolvent to converge")
    xs = np.linspace(0.0, d.length, p.nodes + 1)
    basis = SpectralBasis(DomainSpec(d.length, DIRICHLET), truncation_order=modes)
    E = basis(xs)                                     # (modes, nx)
    rates = basis.generator_rates
    F = (E[:, None, :] * E[None, :, :]).reshape(modes * modes, len(xs))
    denom = (rates[:, None] + rates[None, :] - 2.0 * d.drift).reshape(-1)
    A = (F / denom[:, None]).T @ F
    sw = _simpson_weights(p.nodes, d.length)
    op = A * sw[None, :]
    v = E[0].copy()
    rho = 0.0
    for _ in range(5000):
        w = op @ v
        rho_new = float(np.linalg.norm(w) / np.linalg.norm(v))
        v = w / np.linalg.norm(w)
        if abs(rho_new - rho) <= 1e-8 * rho_new:
            rho = rho_new
            break
        rho = rho_new
    return 1.0 / (p.sigma_slope * math.sqrt(rho)), rho


def _rate_at(p: MomentProblem, lam: float, window: float) -> float:
    try:
        sol = solve_second_moment(replace(p, lam=lam))
    except MomentOverflowError:
        return math.inf
    return lyapunov_rate(sol, p.domain.length / 2.0, window).rate


def critical_lambda(p: MomentProblem, bracket=(0.5, 3.0), rel_tol: float = 0.005,
                    window: float = 0.4, max_expansions: int = 20) -> ThresholdBracket:
    """Bisection on the fitted rate sign plus the spectral-radius estimate.

    The bracket grows geometrically until the rates at its ends have opposite
    signs; fitted rates inside [-RATE_SIGN_FLOOR, inf) count as nonnegative,
    so reflecting-type behaviour (growth at every noise level) walks the lower
    end down until the expansion cap and raises NoThresholdError.
    """
    if p.noise.kind != "white":
        raise ValueError("threshold search is defined for the white-noise equation")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0 < lo < hi):
        raise ValueError("bracket must satisfy 0 < low < high")

    def negative(r):
        return r < -RATE_SIGN_FLOOR

    rate_lo = _rate_at(p, lo, window)
    for _ in range(max_expansions + 1):
        if negative(rate_lo):
            break
        lo /= 2.0
        rate_lo = _rate_at(p, lo, window)
    else:
        raise NoThresholdError(
            f"rate stayed nonnegative down to lambda={lo:g}: growth at every noise level "
            "(reflecting-boundary behaviour); no critical level to bracket")
    rate_hi = _rate_at(p, hi, window)
    for _ in range(max_expansions + 1):
        if not negative(rate_hi) and rate_hi > RATE_SIGN_FLOOR:
            break
        hi *= 2.0
        rate_hi = _rate_at(p, hi, window)
    else:
        raise NoThresholdError(f"rate stayed negative up to lambda={hi:g}")

    while (hi - lo) > rel_tol * 0.5 * (hi + lo):
        mid = math.sqrt(lo * hi)
        r = _rate_at(p, mid, window)
        if negative(r):
            lo, rate_lo = mid, r
        else:
            hi, rate_hi = mid, r
    spectral, _rho = spectral_radius_threshold(p)
    return ThresholdBracket(lambda_low=lo, lambda_high=hi,
                            lambda_crit=0.5 * (lo + hi),
                            spectral_estimate=spectral,
                            rate_low=rate_lo, rate_high=rate_hi)


# ---------------------------------------------------------------------------
# colored noise: two-point equation on the interval
# ---------------------------------------------------------------------------

@dataclass
class CovarianceReport:
    valid: bool
    strictly_positive: bool
    min_value: float
    psd: bool
    min_eigenvalue: float
    note: str = ""


def validate_covariance(noise: NoiseSpec, d: DomainSpec, nodes: int = 64) -> CovarianceReport:
    """Check strict positivity on [-L, L] and PSD of the discretized covariance.

    In one space dimension no small-scale integrability condition is required,
    so any strictly positive PSD covariance (including the unbounded riesz
    kernel) validates; that exemption is recorded in the note.
    """
    if noise.kind == "white":
        return CovarianceReport(True, True, math.inf, True, math.inf,
                                note="white noise: no spatial covariance to validate")
    f = noise.covariance_callable()
    L = d.length
    r = np.linspace(-L, L, 2 * nodes + 1)
    r = r[r != 0.0] if noise.unbounded_at_zero() else r
    vals = f(r)
    min_value = float(np.min(vals))
    strictly_positive = bool(min_value > 0.0 and np.all(np.isfinite(vals)))
    xs = np.linspace(0.0, L, nodes + 1)
    C = covariance_matrix(noise, xs, L / nodes)
    min_eig = float(np.linalg.eigvalsh(C).min())
    psd = min_eig >= -1e-10
    note = "d=1: no small-scale integrability condition required"
    return CovarianceReport(valid=strictly_positive and psd,
                            strictly_positive=strictly_positive,
                            min_value=min_value, psd=psd, min_eigenvalue=min_eig,
                            note=note)


def solve_two_point(p: MomentProblem) -> VolterraSolution:
    """March the colored-noise two-point equation; symmetric by construction.

    Requires a strictly positive covariance on [-L, L] (the lower-bound
    machinery needs the floor) and an absorbing boundary.  The semigroup
    factors act in the eigenbasis so small-time kernels stay consistent with
    the spatial grid; time integration is trapezoid (the covariance keeps the
    kernel bounded), implicit in the tau = 0 multiplication term.
    """
    if p.noise.kind != "colored":
        raise ValueError("solve_two_point needs colored noise")
    if p.domain.boundary != DIRICHLET:
        raise ValueError("two-point solver is set up for the absorbing boundary")
    if p.nodes > 64:
        raise ValueError("two-point state is O(n^2); nodes capped at 64")
    report = validate_covariance(p.noise, p.domain, nodes=p.nodes)
    if not report.valid:
        raise ValueError(f"covariance failed validation: {report}")
    n_steps, times, xs = _grid(p)
    d = p.domain
    coeff = (p.lam * p.sigma_slope) ** 2
    F = covariance_matrix(p.noise, xs, d.length / p.nodes)
    implicit = coeff * 0.5 * p.dt * F
    if float(implicit.max()) >= 0.9:
        raise ResolutionError("dt too coarse for this noise level (implicit factor >= 0.9)")
    denom = 1.0 - implicit

    g = SemigroupExpansion(p.u0, d)(times, xs)
    g[:, 0] = 0.0
    g[:, -1] = 0.0
    basis = SpectralBasis(DomainSpec(d.length, DIRICHLET), truncation_order=p.nodes)
    E = basis(xs)                                    # (modes, nx)
    sw = _simpson_weights(p.nodes, d.length)
    ES = E * sw[None, :]
    decay = np.exp(-np.outer(np.arange(n_steps + 1) * p.dt,
                             basis.generator_rates - d.drift))
    B = np.einsum('ki,mk,kj->mij', E, decay, ES)     # semigroup matrices per lag

    M = np.empty((n_steps + 1, p.nodes + 1, p.nodes + 1))
    M[0] = np.outer(g[0], g[0])
    iu = np.triu_indices(p.nodes + 1, k=1)
    for k in range(1, n_steps + 1):
        rhs = np.outer(g[k], g[k])
        if coeff != 0.0:
            H = F[None, :, :] * M[k - 1:0:-1]
            if k > 1:
                Bk = B[1:k]
                T = Bk @ H @ np.transpose(Bk, (0, 2, 1))
                rhs += coeff * p.dt * T.sum(axis=0)
            rhs += coeff * 0.5 * p.dt * (B[k] @ (F * M[0]) @ B[k].T)
        Mk = rhs / denom
        Mk[0, :] = Mk[-1, :] = 0.0
        Mk[:, 0] = Mk[:, -1] = 0.0
        Mk[(iu[1], iu[0])] = Mk[iu]  # mirror the upper triangle: exact symmetry
        M[k] = Mk
        peak = np.abs(M[k]).max()
        if not np.isfinite(peak) or peak > 1e290:
            partial = VolterraSolution(times[:k], xs, M[:k].copy(), meta=_meta(p, math.nan))
            raise MomentOverflowError(f"two-point moment overflowed at t={times[k]:g}",
                                      partial=partial)
    meta = _meta(p, float(implicit.max()))
    meta.update(covariance=p.noise.covariance, time_rule="trapezoid (bounded kernel)")
    return VolterraSolution(times, xs, M, meta=meta)
