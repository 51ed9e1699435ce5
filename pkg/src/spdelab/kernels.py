"""Heat kernels on (0, L) for the generator 1/2 d_xx.

Two representations are kept for each boundary condition: the reflected-image
sum (fast and sharp for small t) and the eigenfunction series (fast for large
t).  Every evaluation carries a computable geometric tail bound, and the
public entry points certify the requested relative tolerance or raise
AccuracyError with the bound actually achieved.

Image sums, with phi_t the N(0, t) density:
    dirichlet: sum_k [phi_t(x - y - 2kL) - phi_t(x + y - 2kL)]
    neumann:   sum_k [phi_t(x - y - 2kL) + phi_t(x + y - 2kL)]
Series, with rates nu_n = (n pi / L)^2 / 2:
    dirichlet: sum_{n>=1} exp(-nu_n t) e_n(x) e_n(y)
    neumann:   1/L + (2/L) sum_{n>=1} exp(-nu_n t) cos(n pi x/L) cos(n pi y/L)
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .domain import DIRICHLET, NEUMANN, DomainSpec, InitialCondition, KernelQuery, SpectralBasis

_SQRT2PI = math.sqrt(2.0 * math.pi)

# truncation schedule: start at the defaults, double until certified or capped
DEFAULT_MODES = 256
DEFAULT_IMAGES = 32
MAX_MODES = 1 << 16
MAX_IMAGES = 1 << 12


class AccuracyError(ValueError):
    """Requested tolerance could not be certified; carries the bound reached."""

    def __init__(self, message: str, achieved_bound: float):
        super().__init__(f"{message} (achieved bound {achieved_bound:.3e})")
        self.achieved_bound = achieved_bound


def crossover_time(length: float) -> float:
    """Representation switch point: images below L^2/pi^2, series above."""
    return (length / math.pi) ** 2


def gaussian_kernel(t: float, x: float, y: float) -> float:
    """Transition density of the free 1/2 d_xx semigroup (variance t)."""
    if not (t > 0):
        raise ValueError(f"time must be positive, got {t}")
    return math.exp(-((x - y) ** 2) / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def _phi(z, t):
    return np.exp(-z * z / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def _image_tail(t: float, L: float, K: int) -> float:
    # terms |k| > K; image offsets grow by 2L so consecutive terms shrink by
    # at least q = exp(-2 L^2 / t)
    q = math.exp(-2.0 * L * L / t)
    lead = math.exp(-(((2 * K + 1) * L) ** 2) / (2.0 * t)) + math.exp(-(((2 * K) * L) ** 2) / (2.0 * t))
    return 2.0 * lead / (_SQRT2PI * math.sqrt(t) * (1.0 - q))


def _series_tail(t: float, L: float, N: int) -> float:
    # |e_n(x) e_n(y)| <= 2/L and nu_n = c n^2 with c = pi^2 / (2 L^2)
    c = (math.pi / L) ** 2 / 2.0
    r = math.exp(-2.0 * c * (N + 1) * t)
    if r >= 1.0:
        return math.inf
    return (2.0 / L) * math.exp(-c * (N + 1) ** 2 * t) / (1.0 - r)


def _images_value(t, x, y, L, K, sign):
    ks = np.arange(-K, K + 1)
    direct = _phi(x - y - 2.0 * ks * L, t)
    reflected = _phi(x + y - 2.0 * ks * L, t)
    return float(np.sum(direct) + sign * np.sum(reflected))


def _series_value(t, x, y, L, N, boundary):
    n = np.arange(1, N + 1)
    decay = np.exp(-0.5 * (n * math.pi / L) ** 2 * t)
    if boundary == DIRICHLET:
        return float((2.0 / L) * np.sum(decay * np.sin(n * math.pi * x / L) * np.sin(n * math.pi * y / L)))
    return float(1.0 / L + (2.0 / L) * np.sum(decay * np.cos(n * math.pi * x / L) * np.cos(n * math.pi * y / L)))


def _certified(value_fn, tail_fn, start: int, cap: int, tol: float):
    """Grow the truncation until tail <= tol * |partial sum|."""
    k = start
    while True:
        value = value_fn(k)
        tail = tail_fn(k)
        if tail <= tol * max(abs(value), 5e-324):
            return value, tail
        if k >= cap:
            raise AccuracyError("kernel truncation cap reached before tolerance", tail)
        k = min(2 * k, cap)


def _bounded_kernel(q: KernelQuery, d: DomainSpec, sign: int, method: str):
    L = d.length
    if not (0.0 <= q.x <= L and 0.0 <= q.y <= L):
        raise ValueError(f"points must lie in [0, {L}]")
    boundary = DIRICHLET if sign < 0 else NEUMANN
    if boundary == DIRICHLET and (q.x in (0.0, L) or q.y in (0.0, L)):
        return 0.0, 0.0  # absorbed exactly; both representations vanish identically
    if method == "auto":
        method = "images" if q.t < crossover_time(L) else "series"
    if method == "images":
        return _certified(lambda K: _images_value(q.t, q.x, q.y, L, K, sign),
                          lambda K: _image_tail(q.t, L, K),
                          DEFAULT_IMAGES, MAX_IMAGES, q.tolerance)
    if method == "series":
        return _certified(lambda N: _series_value(q.t, q.x, q.y, L, N, boundary),
                          lambda N: _series_tail(q.t, L, N),
                          DEFAULT_MODES, MAX_MODES, q.tolerance)
    raise ValueError(f"unknown method {method!r}")


def dirichlet_kernel(q: KernelQuery, d: DomainSpec, method: str = "auto") -> float:
    """Absorbing-boundary heat kernel p_D(t, x, y), certified to q.tolerance."""
    if d.boundary != DIRICHLET:
        raise ValueError("domain is not dirichlet")
    return _bounded_kernel(q, d, -1, method)[0]


def neumann_kernel(q: KernelQuery, d: DomainSpec, method: str = "auto") -> float:
    """Reflecting-boundary heat kernel p_N(t, x, y), certified to q.tolerance."""
    if d.boundary != NEUMANN:
        raise ValueError("domain is not neumann")
    return _bounded_kernel(q, d, +1, method)[0]


def kernel_with_bound(q: KernelQuery, d: DomainSpec, method: str = "auto"):
    """(value, certified tail bound) for either boundary type."""
    sign = -1 if d.boundary == DIRICHLET else +1
    return _bounded_kernel(q, d, sign, method)


def kernel_value(t: float, x: float, y: float, d: DomainSpec, tol: float = 1e-10) -> float:
    """Convenience scalar evaluation without building a KernelQuery by hand."""
    q = KernelQuery(t=t, x=x, y=y, tolerance=tol)
    return dirichlet_kernel(q, d) if d.boundary == DIRICHLET else neumann_kernel(q, d)


# ---------------------------------------------------------------------------
# vectorised grid evaluation (the moment solvers hammer this)
# ---------------------------------------------------------------------------

def kernel_grid(d: DomainSpec, t: float, xs: np.ndarray, ys: np.ndarray,
                rtol: float = 1e-12) -> np.ndarray:
    """Kernel matrix p_B(t, xs[i], ys[j]) with truncation set from the tail bounds.

    The truncation target is absolute at scale max(1/sqrt(2 pi t), 1/L), which
    the solvers treat as relative to the kernel's natural magnitude.
    """
    if not t > 0:
        raise ValueError("time must be positive")
    L = d.length
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    target = rtol * max(1.0 / math.sqrt(2.0 * math.pi * t), 1.0 / L)
    sign = -1.0 if d.boundary == DIRICHLET else 1.0
    if t < crossover_time(L):
        K = DEFAULT_IMAGES // 8
        while _image_tail(t, L, K) > target and K < MAX_IMAGES:
            K *= 2
        diff = xs[:, None] - ys[None, :]
        summ = xs[:, None] + ys[None, :]
        out = np.zeros_like(diff)
        for k in range(-K, K + 1):
            out += _phi(diff - 2.0 * k * L, t) + sign * _phi(summ - 2.0 * k * L, t)
        return out
    N = 8
    while _series_tail(t, L, N) > target and N < MAX_MODES:
        N *= 2
    n = np.arange(1, N + 1)
    decay = np.exp(-0.5 * (n * math.pi / L) ** 2 * t)
    if d.boundary == DIRICHLET:
        Ex = np.sin(np.outer(xs, n) * math.pi / L)
        Ey = np.sin(np.outer(ys, n) * math.pi / L)
        return (2.0 / L) * ((Ex * decay) @ Ey.T)
    Ex = np.cos(np.outer(xs, n) * math.pi / L)
    Ey = np.cos(np.outer(ys, n) * math.pi / L)
    return 1.0 / L + (2.0 / L) * ((Ex * decay) @ Ey.T)


def dirichlet_mass(t, x, d: DomainSpec) -> np.ndarray:
    """Survival mass int_0^L p_D(t, x, y) dy; broadcasts over t and x.

    Image sum via Gaussian CDFs at small t; odd-mode series at large t, where
    the CDF differences would drown in erf saturation noise:
        sum_{n odd} (4 / (n pi)) e^{-nu_n t} sin(n pi x / L).
    """
    L = d.length
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros(np.broadcast(t, x).shape)
    small = np.broadcast_to(t < crossover_time(L), out.shape)

    if small.any():
        ts = np.broadcast_to(t, out.shape)[small]
        xsm = np.broadcast_to(x, out.shape)[small]
        s = np.sqrt(2.0 * ts)
        K = int(math.ceil(math.sqrt(74.0 * float(np.max(ts))) / (2.0 * L))) + 2

        def cdf(z):
            return 0.5 * (1.0 + special.erf(z / s))

        acc = np.zeros_like(ts)
        for k in range(-K, K + 1):
            acc += 2.0 * cdf(xsm - 2 * k * L) - cdf(xsm - L - 2 * k * L) - cdf(xsm + L - 2 * k * L)
        out[small] = acc

    big = ~small
    if big.any():
        tb = np.broadcast_to(t, out.shape)[big]
        xb = np.broadcast_to(x, out.shape)[big]
        t_min = float(np.min(tb))
        # e^{-nu_{N+1} t_min} below 1e-20 kills the odd-mode tail
        N = int(math.ceil(math.sqrt(92.0 * L * L / (math.pi ** 2 * t_min)))) + 1
        n = np.arange(1, N + 1, 2, dtype=float)
        decay = np.exp(-0.5 * (np.pi / L) ** 2 * np.outer(tb, n * n))
        out[big] = np.einsum('ij,j,ij->i', decay, 4.0 / (np.pi * n),
                             np.sin(np.pi * np.outer(xb, n) / L))
    return out


def diagonal_prefactor(d: DomainSpec, x: np.ndarray) -> np.ndarray:
    """Limit of sqrt(tau) * p_B(2 tau, x, x) as tau -> 0, times 2 sqrt(pi).

    Equals 1 at interior points for both boundary types, 0 at absorbed
    boundary nodes and 2 at reflecting boundary nodes.
    """
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    on_boundary = (x == 0.0) | (x == d.length)
    out[on_boundary] = 0.0 if d.boundary == DIRICHLET else 2.0
    return out


# ---------------------------------------------------------------------------
# deterministic semigroup
# ---------------------------------------------------------------------------

def green_apply(u0: InitialCondition, t: float, x: float, d: DomainSpec,
                tolerance: float = 1e-8) -> float:
    """Heat semigroup (G u0)(t, x) by self-refining Simpson quadrature.

    With drift mu the kernel is e^{mu t} p_B, so the result picks up the same
    factor.
    """
    if not t > 0:
        raise ValueError("time must be positive")
    if not isinstance(u0, InitialCondition):
        raise TypeError("u0 must be an InitialCondition (validated at construction)")
    L = d.length
    m = 64
    previous = None
    while True:
        ys = np.linspace(0.0, L, m + 1)
        w = np.full(m + 1, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= L / (3.0 * m)
        row = kernel_grid(d, t, np.array([x]), ys)[0]
        estimate = float(np.sum(w * row * u0(ys)))
        if previous is not None and abs(estimate - previous) < (tolerance / 4.0) * max(1.0, abs(estimate)):
            break
        if m >= 1 << 14:
            raise AccuracyError("semigroup quadrature did not settle", abs(estimate - previous))
        previous = estimate
        m *= 2
    return math.exp(d.drift * t) * estimate


class SemigroupExpansion:
    """Eigenmode expansion of (G u0)(t, x), for fast evaluation on grids.

    Agrees with green_apply (quadrature route) to the projection tolerance;
    the pair is cross-checked in the test suite.
    """

    def __init__(self, u0: InitialCondition, d: DomainSpec, modes: int = 256,
                 quad_points: int = 4096):
        self.domain = d
        self.basis = SpectralBasis(d, truncation_order=modes)
        m = quad_points
        ys = np.linspace(0.0, d.length, m + 1)
        w = np.full(m + 1, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= d.length / (3.0 * m)
        self.coefficients = self.basis.project(u0(ys), ys, w)

    def __call__(self, t, x) -> np.ndarray:
        """Values on the (t, x) product grid; shape (len(t), len(x))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        E = self.basis(x)                      # (modes, nx)
        decay = np.exp(-np.outer(t, self.basis.generator_rates))  # (nt, modes)
        out = (decay * self.coefficients) @ E
        if self.domain.drift != 0.0:
            out *= np.exp(self.domain.drift * t)[:, None]
        return out
