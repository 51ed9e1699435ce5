import math

import numpy as np
import pytest

import spdelab as sl
from spdelab.kernels import (SemigroupExpansion, crossover_time, dirichlet_mass,
                             kernel_grid, kernel_with_bound)

from conftest import simpson_weights

L = math.pi


def test_gaussian_diagonal_value():
    assert sl.gaussian_kernel(1.0, 0.0, 0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-14)


def test_gaussian_symmetry_and_mass():
    from scipy.integrate import trapezoid
    assert sl.gaussian_kernel(0.7, 0.3, 1.1) == sl.gaussian_kernel(0.7, 1.1, 0.3)
    ys = np.linspace(0.3 - 15, 0.3 + 15, 1 << 14)
    vals = np.array([sl.gaussian_kernel(0.5, 0.3, y) for y in ys])
    assert trapezoid(vals, ys) == pytest.approx(1.0, abs=1e-10)


def test_gaussian_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        sl.gaussian_kernel(0.0, 0.1, 0.2)
    with pytest.raises(ValueError):
        sl.KernelQuery(t=-1.0, x=0.1, y=0.2)


def test_dirichlet_boundary_absorption(dirichlet):
    q = sl.KernelQuery(t=1.0, x=0.0, y=L / 2)
    assert sl.dirichlet_kernel(q, dirichlet) == 0.0


def test_dirichlet_one_mode_large_time(dirichlet):
    # ground-mode truncation at t=20: e^{-nu_1 t} e_1(x)^2, nu_1 = 1/2
    q = sl.KernelQuery(t=20.0, x=L / 2, y=L / 2, tolerance=1e-9)
    expected = math.exp(-10.0) * (2.0 / L)
    assert sl.dirichlet_kernel(q, dirichlet) == pytest.approx(expected, rel=1e-6)


def test_dirichlet_below_gaussian(dirichlet):
    for t in (0.05, 0.3, 1.0, 4.0):
        for x in np.linspace(0.2, L - 0.2, 7):
            for y in np.linspace(0.1, L - 0.1, 7):
                q = sl.KernelQuery(t=t, x=float(x), y=float(y))
                assert sl.dirichlet_kernel(q, dirichlet) <= sl.gaussian_kernel(t, x, y) + 1e-10


def test_neumann_mass_and_limit(neumann):
    n = 2048
    ys = np.linspace(0, L, n + 1)
    w = simpson_weights(n, L)
    mass = float((kernel_grid(neumann, 0.3, np.array([0.2 * L]), ys) @ w)[0])
    assert mass == pytest.approx(1.0, abs=1e-8)
    q = sl.KernelQuery(t=100.0, x=1.0, y=2.0, tolerance=1e-9)
    assert sl.neumann_kernel(q, neumann) == pytest.approx(1.0 / L, rel=1e-6)


def test_neumann_above_gaussian(neumann):
    for t in (0.05, 0.5, 2.0):
        g = kernel_grid(neumann, t, np.linspace(0, L, 9), np.linspace(0, L, 9))
        xs = np.linspace(0, L, 9)
        gauss = np.exp(-((xs[:, None] - xs[None, :]) ** 2) / (2 * t)) / math.sqrt(2 * math.pi * t)
        assert np.all(g >= gauss - 1e-10)


def test_chapman_kolmogorov(dirichlet, neumann):
    n = 512
    zs = np.linspace(0, L, n + 1)
    w = simpson_weights(n, L)
    xs = np.linspace(0.3, L - 0.3, 5)
    for dom in (dirichlet, neumann):
        for t, s in ((0.2, 0.35), (1.0, 0.5)):
            lhs = kernel_grid(dom, t, xs, zs) @ (w[:, None] * kernel_grid(dom, s, zs, xs))
            rhs = kernel_grid(dom, t + s, xs, xs)
            assert np.max(np.abs(lhs - rhs) / rhs) < 1e-7


def test_square_identity(dirichlet):
    n = 1024
    ys = np.linspace(0, L, n + 1)
    w = simpson_weights(n, L)
    xs = np.linspace(0.4, L - 0.4, 5)
    for t in (0.1, 0.6, 2.0):
        P = kernel_grid(dirichlet, t, xs, ys)
        lhs = (P * P) @ w
        rhs = kernel_grid(dirichlet, 2 * t, xs, xs).diagonal()
        assert np.max(np.abs(lhs - rhs) / rhs) < 1e-7


def test_dual_representation_agreement(dirichlet, neumann):
    for dom in (dirichlet, neumann):
        for t in (0.05, 0.5, 1.5, 6.0):
            for x, y in ((0.4, 0.9), (L / 2, L / 2), (0.1, L - 0.2)):
                q = sl.KernelQuery(t=t, x=x, y=y, tolerance=1e-12)
                vi, bi = kernel_with_bound(q, dom, method="images")
                vs, bs = kernel_with_bound(q, dom, method="series")
                assert abs(vi - vs) <= 2 * max(bi, bs) + 1e-15


def test_interior_floor_extraction(dirichlet):
    from spdelab.bounds import interior_floor_constants
    c, t0 = interior_floor_constants(dirichlet, L / 8)
    assert c > 0 and t0 > 0
    xs = np.linspace(L / 8, L - L / 8, 9)
    for t in (t0, 2 * t0, 10 * t0, 40.0):
        vals = kernel_grid(dirichlet, t, xs, xs)
        assert np.all(vals >= c * math.exp(-dirichlet.nu1 * t) * (1 - 1e-12))


def test_accuracy_error_carries_bound(dirichlet):
    # the eigenseries cannot certify 1e-10 at t=1e-9 within the mode cap
    q = sl.KernelQuery(t=1e-9, x=1.0, y=1.0, tolerance=1e-10)
    with pytest.raises(sl.AccuracyError) as exc:
        sl.dirichlet_kernel(q, dirichlet, method="series")
    assert exc.value.achieved_bound > 0


def test_green_apply_conservation_and_decay(dirichlet, neumann, u0_one):
    assert sl.green_apply(u0_one, 0.8, 1.7, neumann) == pytest.approx(1.0, abs=1e-9)
    gm = sl.ground_mode(L)
    for t, x in ((0.5, 1.0), (3.0, 2.0)):
        expected = math.exp(-0.5 * t) * math.sqrt(2 / L) * math.sin(x)
        assert sl.green_apply(gm, t, x, dirichlet) == pytest.approx(expected, rel=1e-6)


def test_green_apply_bump_decays(dirichlet, u0_bump):
    # semigroup of a bounded profile dies at the ground-mode rate
    v30 = sl.green_apply(u0_bump, 30.0, L / 2, dirichlet)
    assert 0 < v30 <= u0_bump.sup_bound * L * math.exp(-15.0)


def test_green_apply_rejects_raw_callable(dirichlet):
    with pytest.raises(TypeError):
        sl.green_apply(lambda x: x, 1.0, 1.0, dirichlet)


def test_semigroup_expansion_matches_quadrature(dirichlet, neumann, u0_bump):
    for dom in (dirichlet, neumann):
        se = SemigroupExpansion(u0_bump, dom)
        for t, x in ((0.3, 0.8), (2.0, 2.4)):
            assert se(np.array([t]), np.array([x]))[0, 0] == pytest.approx(
                sl.green_apply(u0_bump, t, x, dom, tolerance=1e-10), abs=1e-8)


def test_drift_multiplies_semigroup(u0_bump):
    base = sl.DomainSpec(length=L, boundary="dirichlet")
    drifted = sl.DomainSpec(length=L, boundary="dirichlet", drift=0.3)
    v0 = sl.green_apply(u0_bump, 1.5, 1.1, base)
    v1 = sl.green_apply(u0_bump, 1.5, 1.1, drifted)
    assert v1 == pytest.approx(v0 * math.exp(0.45), rel=1e-10)


def test_mass_dual_representation(dirichlet):
    tc = crossover_time(L)
    xs = np.array([0.7, 1.9])
    below = dirichlet_mass(tc * 0.999999, xs, dirichlet)
    above = dirichlet_mass(tc * 1.000001, xs, dirichlet)
    assert np.max(np.abs(below - above)) < 1e-6
