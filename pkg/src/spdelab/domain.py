"""Problem data for the stochastic heat equation on an interval (0, L).

The PDE skeleton is du = 1/2 u'' dt (+ mu*u dt) + lambda*sigma(u) dW with
absorbing (dirichlet) or reflecting (neumann) ends.  Everything downstream
(kernels, moment solvers, simulation) is parameterised by the small value
objects defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

# dense sampling resolution used by the constructors that validate callables
_SAMPLES = 2001


@dataclass(frozen=True)
class DomainSpec:
    """Interval length, boundary condition and linear drift coefficient."""

    length: float
    boundary: str = DIRICHLET
    drift: float = 0.0

    def __post_init__(self):
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"length must be positive and finite, got {self.length}")
        if self.boundary not in (DIRICHLET, NEUMANN):
            raise ValueError(f"boundary must be 'dirichlet' or 'neumann', got {self.boundary!r}")
        if not math.isfinite(self.drift):
            raise ValueError("drift must be finite")

    @property
    def nu1(self) -> float:
        """Smallest generator decay rate (pi/L)^2 / 2 of the 1/2 d_xx semigroup."""
        return 0.5 * (math.pi / self.length) ** 2


class SpectralBasis:
    """Eigenpairs of the generator 1/2 d_xx on (0, L) for one boundary condition.

    Dirichlet: e_n(x) = sqrt(2/L) sin(n pi x / L), n >= 1.
    Neumann:   e_0(x) = sqrt(1/L), e_n(x) = sqrt(2/L) cos(n pi x / L), n >= 1.
    Laplacian eigenvalues are (n pi / L)^2; generator rates are half of that.
    """

    def __init__(self, domain: DomainSpec, truncation_order: int = 256):
        if truncation_order < 1:
            raise ValueError("truncation_order must be >= 1")
        self.domain = domain
        self.length = domain.length
        self.truncation_order = truncation_order
        if domain.boundary == DIRICHLET:
            self.indices = np.arange(1, truncation_order + 1)
        else:
            self.indices = np.arange(0, truncation_order + 1)
        self.laplacian_eigenvalues = (self.indices * np.pi / self.length) ** 2
        self.generator_rates = 0.5 * self.laplacian_eigenvalues

    def __call__(self, x):
        """Evaluate all basis functions at x; shape (n_modes,) + shape(x)."""
        x = np.asarray(x, dtype=float)
        L = self.length
        arg = self.indices.reshape((-1,) + (1,) * x.ndim) * np.pi * x / L
        if self.domain.boundary == DIRICHLET:
            return math.sqrt(2.0 / L) * np.sin(arg)
        out = math.sqrt(2.0 / L) * np.cos(arg)
        out[0] = 1.0 / math.sqrt(L)
        return out

    def project(self, values: np.ndarray, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Quadrature coefficients <values, e_n> for samples on nodes x."""
        return self(x) @ (weights * values)


@dataclass(frozen=True)
class KernelQuery:
    """One heat-kernel evaluation request with a certified relative tolerance."""

    t: float
    x: float
    y: float
    tolerance: float = 1e-10

    def __post_init__(self):
        if not (self.t > 0 and math.isfinite(self.t)):
            raise ValueError(f"t must be positive, got {self.t}")
        if not (0.0 < self.tolerance <= 1e-3):
            raise ValueError(f"tolerance must lie in (0, 1e-3], got {self.tolerance}")


class InitialCondition:
    """Bounded nonnegative initial profile on [0, L].

    Wraps a vectorised callable; the constructor samples it densely and rejects
    negative or unbounded data.
    """

    def __init__(self, func, length: float, name: str = "custom"):
        self.func = func
        self.length = length
        self.name = name
        xs = np.linspace(0.0, length, _SAMPLES)
        vals = np.asarray(func(xs), dtype=float)
        if vals.shape != xs.shape:
            raise ValueError("initial condition must map arrays to arrays elementwise")
        if not np.all(np.isfinite(vals)):
            raise ValueError("initial condition must be bounded (finite) on [0, L]")
        if vals.min() < 0.0:
            raise ValueError(f"initial condition must be nonnegative; min sampled value {vals.min():g}")
        self.sup_bound = float(vals.max())

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)


def bump(length: float) -> InitialCondition:
    """Default initial profile: sin^2 bump supported on [L/4, 3L/4], peak 1."""

    def f(x):
        x = np.asarray(x, dtype=float)
        inside = (x >= length / 4.0) & (x <= 3.0 * length / 4.0)
        out = np.zeros_like(x)
        out[inside] = np.sin(np.pi * (x[inside] - length / 4.0) / (length / 2.0)) ** 2
        return out

    return InitialCondition(f, length, name="bump")


def constant(length: float, value: float = 1.0) -> InitialCondition:
    if value < 0:
        raise ValueError("constant initial condition must be nonnegative")
    return InitialCondition(lambda x: np.full_like(np.asarray(x, dtype=float), value),
                            length, name=f"constant({value:g})")


def ground_mode(length: float) -> InitialCondition:
    """First Dirichlet eigenfunction sqrt(2/L) sin(pi x/L); nonnegative on [0, L]."""
    return InitialCondition(
        lambda x: np.sqrt(2.0 / length) * np.sin(np.pi * np.asarray(x, dtype=float) / length),
        length, name="ground_mode")


@dataclass(frozen=True)
class SigmaSpec:
    """Multiplicative nonlinearity with sandwich l|x| <= |sigma(x)| <= L|x|.

    kind 'linear' is sigma(u) = u scaled by nothing (slopes fold into lambda);
    kind 'modulated' is u * (l + (L-l)(1+sin u)/2), Lipschitz and sandwiched.
    """

    kind: str = "linear"
    l_sigma: float = 1.0
    L_sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "modulated"):
            raise ValueError(f"unknown sigma kind {self.kind!r}")
        if not (0 < self.l_sigma <= self.L_sigma):
            raise ValueError("need 0 < l_sigma <= L_sigma")
        if self.kind == "linear" and self.l_sigma != self.L_sigma:
            raise ValueError("linear sigma has a single slope: l_sigma must equal L_sigma")
        # sandwich check by dense sampling on [-10, 10]
        u = np.linspace(-10.0, 10.0, _SAMPLES)
        s = self.apply(u)
        lo = self.l_sigma * np.abs(u)
        hi = self.L_sigma * np.abs(u)
        if np.any(np.abs(s) < lo - 1e-12) or np.any(np.abs(s) > hi + 1e-12):
            raise ValueError("sigma violates the l|x| <= |sigma(x)| <= L|x| sandwich")

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "linear":
            return self.L_sigma * u
        factor = self.l_sigma + (self.L_sigma - self.l_sigma) * (1.0 + np.sin(u)) / 2.0
        return u * factor


@dataclass(frozen=True)
class NoiseSpec:
    """Space-time white noise, or noise white in time with a spatial covariance.

    Colored covariance kinds: riesz |x|^(-alpha) with alpha in (0,1),
    exponential exp(-|x|/ell), constant 1, or a custom callable (used to
    exercise validation rejections).
    """

    kind: str = "white"
    covariance: str | None = None
    alpha: float = 0.5
    ell: float = 1.0
    custom: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("white", "colored"):
            raise ValueError(f"noise kind must be 'white' or 'colored', got {self.kind!r}")
        if self.kind == "white":
            if self.covariance is not None:
                raise ValueError("white noise takes no covariance")
            return
        if self.covariance not in ("riesz", "exponential", "constant", "custom"):
            raise ValueError(f"unknown covariance {self.covariance!r}")
        if self.covariance == "riesz" and not (0.0 < self.alpha < 1.0):
            raise ValueError("riesz exponent alpha must lie in (0, 1)")
        if self.covariance == "exponential" and not self.ell > 0:
            raise ValueError("exponential covariance length ell must be positive")
        if self.covariance == "custom" and not callable(self.custom):
            raise ValueError("custom covariance requires a callable")

    def covariance_callable(self):
        if self.kind != "colored":
            raise ValueError("white noise has no spatial covariance")
        if self.covariance == "riesz":
            alpha = self.alpha
            return lambda r: np.abs(r) ** (-alpha)
        if self.covariance == "exponential":
            ell = self.ell
            return lambda r: np.exp(-np.abs(r) / ell)
        if self.covariance == "constant":
            return lambda r: np.ones_like(np.asarray(r, dtype=float))
        return lambda r: np.asarray(self.custom(r), dtype=float)

    def unbounded_at_zero(self) -> bool:
        return self.kind == "colored" and self.covariance == "riesz"


def covariance_matrix(noise: NoiseSpec, x: np.ndarray, h: float) -> np.ndarray:
    """Covariance of the colored field at nodes x with cell width h.

    Node values f(x_j - x_k) off the diagonal; for kernels unbounded at zero
    (riesz) the diagonal is replaced by the exact cell average of f over a
    length-h cell, which is finite for alpha < 1 and keeps the matrix PSD.
    """
    if noise.kind != "colored":
        raise ValueError("covariance_matrix needs colored noise")
    f = noise.covariance_callable()
    x = np.asarray(x, dtype=float)
    diff = x[:, None] - x[None, :]
    C = np.empty_like(diff)
    off = ~np.eye(len(x), dtype=bool)
    C[off] = f(diff[off])
    if noise.unbounded_at_zero():
        alpha = noise.alpha
        # (1/h^2) int_0^h int_0^h |y-y'|^(-alpha) dy dy'
        diag = 2.0 * h ** (-alpha) / ((1.0 - alpha) * (2.0 - alpha))
    else:
        diag = float(f(np.array([0.0]))[0]) if np.ndim(f(0.0)) else float(f(0.0))
    np.fill_diagonal(C, diag)
    return C
