"""Explicit Euler-Maruyama paths of the stochastic heat equation.

Semi-discrete scheme on nodes x_k = k L / n, k = 0..n, h = L/n:

    u^{j+1}_k = u^j_k + dt * [ (1/2) h^{-2} (u_{k+1} - 2 u_k + u_{k-1}) + mu u_k ]
                + lambda sigma(u^j_k) * xi_k

with xi_k ~ N(0, dt) scaled by h^{-1/2} for space-time white noise, or drawn
jointly with covariance dt * f(x_j - x_k) (no h factor) for colored noise.
Absorbing ends pin u_0 = u_n = 0; reflecting ends use ghost nodes u_{-1} = u_1
and u_{n+1} = u_{n-1}, whose exactly conserved functional is the
trapezoid-weighted mass.

Reproducibility: path i draws from PCG64 seeded with (master_seed, i), so any
path can be regenerated in isolation and ensembles are a pure function of
(config, paths).  Accumulation walks paths in index order with a fixed group
size, making totals independent of how work might be scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (DIRICHLET, DomainSpec, InitialCondition, NoiseSpec,
                     SigmaSpec, covariance_matrix)

GROUP_SIZE = 256        # paths marched together; fixed, part of the reduction order
STEP_CHUNK = 256        # noise is generated in blocks of this many steps
CHOLESKY_JITTER = 1e-10


@dataclass(frozen=True)
class SimConfig:
    domain: DomainSpec
    u0: InitialCondition
    lam: float
    sigma: SigmaSpec = SigmaSpec()
    noise: NoiseSpec = NoiseSpec(kind="white")
    nodes: int = 64
    dt: float = 1e-3
    horizon: float = 1.0
    snapshot_times: tuple = (0.5, 1.0)
    master_seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.nodes < 16:
            raise ValueError("need at least 16 nodes")
        h = self.domain.length / self.nodes
        if self.dt > h * h:
            raise ValueError(f"explicit scheme needs dt <= h^2 = {h * h:.3e}, got {self.dt:g}")
        if not self.snapshot_times:
            raise ValueError("at least one snapshot time is required")
        for t in self.snapshot_times:
            if not (0.0 <= t <= self.horizon + 1e-12):
                raise ValueError(f"snapshot {t} outside [0, horizon]")
        if not (0 <= self.master_seed < 2 ** 64):
            raise ValueError("master_seed must fit in 64 bits")

    @property
    def h(self) -> float:
        return self.domain.length / self.nodes

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def snapshot_steps(self) -> np.ndarray:
        steps = np.round(np.asarray(self.snapshot_times) / self.dt).astype(int)
        return np.minimum(steps, self.n_steps)

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.domain.length, self.nodes + 1)


@dataclass
class PathState:
    time: float
    values: np.ndarray


@dataclass
class PathResult:
    times: np.ndarray
    snapshots: np.ndarray          # (n_snapshots, nodes+1); NaN rows after blow-up
    blown: bool = False
    blow_time: float = math.nan


@dataclass
class EnsembleAccumulators:
    """Raw per-cell moment sums in fixed path order.

    sums[p][s, k] = sum over included paths of |u(t_s, x_k)|^p, and
    sumsq[p] accumulates |u|^(2p) for standard errors.
    """

    times: np.ndarray
    x: np.ndarray
    orders: tuple
    sums: dict
    sumsq: dict
    count: int
    excluded: int
    config: SimConfig = None
    paths: int = 0


def _colored_factor(cfg: SimConfig) -> np.ndarray:
    C = covariance_matrix(cfg.noise, cfg.grid(), cfg.h)
    return np.linalg.cholesky(C + CHOLESKY_JITTER * np.eye(len(C)))


def _noise_scale(cfg: SimConfig):
    """Per-node multiplier applied to sqrt(dt)-normal draws."""
    if cfg.noise.kind == "white":
        return 1.0 / math.sqrt(cfg.h), None
    return 1.0, _colored_factor(cfg)


def em_step(state: PathState, cfg: SimConfig, increments: np.ndarray) -> PathState:
    """One explicit step from per-node Brownian increments (variance dt each).

    For colored noise the increments must already carry the spatial
    covariance; for white noise they are i.i.d. and the h^{-1/2} mesh scaling
    is applied here.
    """
    u = state.values
    out = _step_batch(u[None, :], cfg, increments[None, :],
                      1.0 / math.sqrt(cfg.h) if cfg.noise.kind == "white" else 1.0)
    return PathState(time=state.time + cfg.dt, values=out[0])


def _step_batch(U, cfg: SimConfig, inc, scale) -> np.ndarray:
    d = cfg.domain
    h2 = cfg.h * cfg.h
    lap = np.empty_like(U)
    lap[:, 1:-1] = U[:, 2:] - 2.0 * U[:, 1:-1] + U[:, :-2]
    if d.boundary == DIRICHLET:
        lap[:, 0] = 0.0
        lap[:, -1] = 0.0
    else:
        lap[:, 0] = 2.0 * (U[:, 1] - U[:, 0])
        lap[:, -1] = 2.0 * (U[:, -2] - U[:, -1])
    out = U + cfg.dt * (0.5 * lap / h2 + d.drift * U) \
        + cfg.lam * cfg.sigma.apply(U) * (scale * inc)
    if d.boundary == DIRICHLET:
        out[:, 0] = 0.0
        out[:, -1] = 0.0
    return out


def _path_generator(cfg: SimConfig, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.master_seed, index))))


def _march_group(cfg: SimConfig, indices, snap_steps, scale, chol):
    """March a group of paths; returns (snapshots, blown mask, blow times)."""
    B = len(indices)
    nn = cfg.nodes + 1
    U = np.tile(cfg.u0(cfg.grid()), (B, 1))
    if cfg.domain.boundary == DIRICHLET:
        U[:, 0] = 0.0
        U[:, -1] = 0.0
    gens = [_path_generator(cfg, i) for i in indices]
    snaps = np.full((B, len(snap_steps), nn), np.nan)
    blown = np.zeros(B, dtype=bool)
    blow_time = np.full(B, np.nan)
    snap_lookup = {}
    for pos, s in enumerate(snap_steps):
        snap_lookup.setdefault(int(s), []).append(pos)
    for pos in snap_lookup.get(0, []):
        snaps[:, pos, :] = U
    sqdt = math.sqrt(cfg.dt)
    step = 0
    with np.errstate(over="ignore", invalid="ignore"):  # blow-up is handled, not fatal
        while step < cfg.n_steps:
            chunk = min(STEP_CHUNK, cfg.n_steps - step)
            noise = np.stack([g.standard_normal((chunk, nn)) for g in gens])
            if chol is not None:
                noise = noise @ chol.T
            for j in range(chunk):
                U = _step_batch(U, cfg, sqdt * noise[:, j, :], scale)
                bad = ~np.isfinite(U).all(axis=1)
                fresh = bad & ~blown
                if fresh.any():
                    blown |= fresh
                    blow_time[fresh] = (step + j + 1) * cfg.dt
                    U[fresh] = np.nan
                for pos in snap_lookup.get(step + j + 1, []):
                    snaps[:, pos, :] = U
            step += chunk
    return snaps, blown, blow_time


def run_path(cfg: SimConfig, path_index: int) -> PathResult:
    """Simulate one path; bit-reproducible from (master_seed, path_index)."""
    scale, chol = _noise_scale(cfg)
    snap_steps = cfg.snapshot_steps()
    snaps, blown, blow_time = _march_group(cfg, [path_index], snap_steps, scale, chol)
    return PathResult(times=snap_steps * cfg.dt, snapshots=snaps[0],
                      blown=bool(blown[0]), blow_time=float(blow_time[0]))


def iter_path_groups(cfg: SimConfig, paths: int):
    """Yield (indices, snapshots, blown) per fixed-size path group, in order.

    The grouping is the reduction order contract: accumulating the yielded
    blocks sequentially reproduces run_ensemble exactly, and two configs
    sharing a master_seed consume identical noise per path (common random
    numbers).
    """
    scale, chol = _noise_scale(cfg)
    snap_steps = cfg.snapshot_steps()
    for start in range(0, paths, GROUP_SIZE):
        indices = list(range(start, min(start + GROUP_SIZE, paths)))
        snaps, blown, _bt = _march_group(cfg, indices, snap_steps, scale, chol)
        yield indices, snaps, blown


def run_ensemble(cfg: SimConfig, paths: int, moments: tuple = (2,)) -> EnsembleAccumulators:
    """Accumulate sums of |u|^p over an ensemble, in fixed path order.

    Paths that blow up are excluded from the accumulators entirely and
    counted in `excluded`.
    """
    if paths < 2:
        raise ValueError("need at least 2 paths")
    orders = tuple(sorted(set(int(p) for p in moments)))
    if any(p < 1 for p in orders):
        raise ValueError("moment orders must be >= 1")
    nn = cfg.nodes + 1
    ns = len(cfg.snapshot_steps())
    sums = {p: np.zeros((ns, nn)) for p in orders}
    sumsq = {p: np.zeros((ns, nn)) for p in orders}
    included = 0
    excluded = 0
    for _indices, snaps, blown in iter_path_groups(cfg, paths):
        good = snaps[~blown]
        excluded += int(blown.sum())
        included += good.shape[0]
        a = np.abs(good)
        for p in orders:
            ap = a ** p
            sums[p] += ap.sum(axis=0)
            sumsq[p] += (ap * ap).sum(axis=0)
    return EnsembleAccumulators(times=cfg.snapshot_steps() * cfg.dt, x=cfg.grid(),
                                orders=orders, sums=sums, sumsq=sumsq,
                                count=included, excluded=excluded,
                                config=cfg, paths=paths)
