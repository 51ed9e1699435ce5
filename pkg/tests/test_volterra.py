import math
from dataclasses import replace

import numpy as np
import pytest

import spdelab as sl
from spdelab.kernels import SemigroupExpansion

L = math.pi


def problem(dom, u0, lam, **kw):
    args = {"horizon": 10.0, "nodes": 64, "dt": 0.025}
    args.update(kw)
    return sl.MomentProblem(domain=dom, u0=u0, lam=lam, **args)


@pytest.fixture(scope="module")
def dirichlet_sols(dirichlet, u0_bump):
    return {lam: sl.solve_second_moment(problem(dirichlet, u0_bump, lam))
            for lam in (0.0, 0.2, 1.0, 2.0)}


def test_problem_validation(dirichlet, u0_bump):
    with pytest.raises(ValueError):
        problem(dirichlet, u0_bump, -1.0)
    with pytest.raises(ValueError):
        problem(dirichlet, u0_bump, 1.0, nodes=15)
    with pytest.raises(ValueError):
        problem(dirichlet, u0_bump, 1.0, dt=0.1)  # dt > horizon/200


def test_zero_noise_reduces_to_squared_semigroup(dirichlet, u0_bump, dirichlet_sols):
    sol = dirichlet_sols[0.0]
    g = SemigroupExpansion(u0_bump, dirichlet)(sol.times, sol.x)
    assert np.max(np.abs(sol.values - g * g)) < 1e-14
    fit = sl.lyapunov_rate(sol, L / 2)
    assert fit.rate == pytest.approx(-1.0, rel=0.02)


def test_solution_nonnegative_and_monotone_in_lambda(dirichlet_sols):
    prev = None
    for lam in (0.0, 0.2, 1.0, 2.0):
        sol = dirichlet_sols[lam]
        assert np.all(sol.values >= 0.0)
        if prev is not None:
            assert np.all(sol.values >= prev - 1e-300)
        prev = sol.values


def test_rate_monotone_and_dichotomy(dirichlet_sols):
    rates = [sl.lyapunov_rate(dirichlet_sols[lam], L / 2).rate
             for lam in (0.0, 0.2, 1.0, 2.0)]
    assert all(b >= a - 1e-9 for a, b in zip(rates, rates[1:]))
    assert rates[0] < 0 and rates[1] < 0 and rates[-1] > 0


def test_grid_convergence(dirichlet, u0_bump):
    for lam in (0.5, 2.0):
        coarse = sl.solve_second_moment(problem(dirichlet, u0_bump, lam,
                                                horizon=4.0, nodes=32, dt=0.02))
        fine = sl.solve_second_moment(problem(dirichlet, u0_bump, lam,
                                              horizon=4.0, nodes=64, dt=0.01))
        a = coarse.values[-1, 16]   # x = L/2 on the coarse grid
        b = fine.values[-1, 32]
        assert abs(a / b - 1.0) < 0.02


def test_overflow_carries_partial_trajectory(dirichlet, u0_bump):
    with pytest.raises(sl.MomentOverflowError) as exc:
        sl.solve_second_moment(problem(dirichlet, u0_bump, 5.0, horizon=6.0, dt=1.2e-3))
    part = exc.value.partial
    assert part is not None and len(part.times) > 100
    assert np.isfinite(part.values).all()


def test_resolution_error_on_coarse_step(dirichlet, u0_bump):
    with pytest.raises(sl.ResolutionError):
        sl.solve_second_moment(problem(dirichlet, u0_bump, 5.0, horizon=10.0, dt=0.025))


def test_drift_shifts_rate_exactly(dirichlet, u0_bump, dirichlet_sols):
    base = sl.lyapunov_rate(dirichlet_sols[2.0], L / 2).rate
    for mu in (-0.2, 0.2):
        dom = sl.DomainSpec(length=L, boundary="dirichlet", drift=mu)
        sol = sl.solve_second_moment(problem(dom, u0_bump, 2.0))
        rate = sl.lyapunov_rate(sol, L / 2).rate
        assert rate == pytest.approx(base + 2 * mu, abs=0.02 * abs(base))


def test_picard_agrees_with_marching(dirichlet, u0_bump):
    p = problem(dirichlet, u0_bump, 0.5, horizon=2.0, nodes=32, dt=0.01)
    march = sl.solve_second_moment(p)
    pic = sl.picard_solve(p, iterations=40)
    rel = np.max(np.abs(march.values - pic.values) / np.maximum(march.values, 1e-30))
    assert rel < 1e-4
    res = pic.meta["residuals"]
    assert pic.meta["contraction"]
    # geometric decay of successive differences
    assert res[3] < res[1] * 0.5 and res[5] < res[3] * 0.5


def test_picard_seed_is_squared_semigroup(dirichlet, u0_bump):
    p = problem(dirichlet, u0_bump, 0.5, horizon=2.0, nodes=32, dt=0.01)
    pic0 = sl.picard_solve(p, iterations=0)
    g = SemigroupExpansion(u0_bump, dirichlet)(pic0.times, pic0.x)
    assert np.max(np.abs(pic0.values - g * g)) < 1e-14


def test_lyapunov_rate_window_errors(dirichlet_sols):
    with pytest.raises(sl.WindowError):
        sl.lyapunov_rate(dirichlet_sols[1.0], L / 2, window=0.02)  # < 20 points
    boundary_traj = dirichlet_sols[1.0]
    with pytest.raises(sl.WindowError):
        sl.lyapunov_rate(boundary_traj, 0.0)  # M = 0 on the boundary


def test_lyapunov_rate_on_renewal_trajectory():
    sol = sl.renewal_solve(sl.RenewalProblem(a=1.0, k=1.0, b=1.0, horizon=10.0, step=1e-3))
    traj = sl.VolterraSolution(times=sol.times, x=np.array([0.0]),
                               values=sol.values[:, None], meta={})
    fit = sl.lyapunov_rate(traj, 0.0)
    assert fit.rate == pytest.approx(math.pi, rel=0.05)


def test_critical_lambda_and_spectral(dirichlet, u0_bump):
    p = problem(dirichlet, u0_bump, 1.0)
    bracket = sl.critical_lambda(p, bracket=(0.5, 3.0))
    assert bracket.lambda_low < bracket.lambda_crit < bracket.lambda_high
    assert bracket.rate_low < 0 < bracket.rate_high
    assert abs(bracket.lambda_crit - bracket.spectral_estimate) / bracket.spectral_estimate < 0.05


def test_no_threshold_for_reflecting(neumann, u0_bump):
    p = problem(neumann, u0_bump, 1.0, horizon=10.0, nodes=32, dt=0.05)
    with pytest.raises(sl.NoThresholdError):
        sl.critical_lambda(p, bracket=(0.25, 0.5), max_expansions=6)
    with pytest.raises(sl.NoThresholdError):
        sl.spectral_radius_threshold(p)


def test_threshold_decreases_with_drift(dirichlet, u0_bump):
    crits = []
    for mu in (-0.2, 0.0, 0.2):
        dom = sl.DomainSpec(length=L, boundary="dirichlet", drift=mu)
        lc, _rho = sl.spectral_radius_threshold(problem(dom, u0_bump, 1.0))
        crits.append(lc)
    assert crits[0] > crits[1] > crits[2]


def test_two_point_zero_noise_is_product(dirichlet, u0_bump):
    noise = sl.NoiseSpec(kind="colored", covariance="exponential", ell=1.0)
    p = problem(dirichlet, u0_bump, 0.0, noise=noise, horizon=2.0, nodes=32, dt=0.01)
    sol = sl.solve_two_point(p)
    g = SemigroupExpansion(u0_bump, dirichlet)(sol.times, sol.x)
    outer = np.einsum("ti,tj->tij", g, g)
    assert np.max(np.abs(sol.values - outer)) < 1e-12


def test_two_point_symmetric_and_diagonal_positive(dirichlet, u0_bump):
    noise = sl.NoiseSpec(kind="colored", covariance="exponential", ell=1.0)
    p = problem(dirichlet, u0_bump, 1.0, noise=noise, horizon=2.0, nodes=32, dt=0.01)
    sol = sl.solve_two_point(p)
    assert np.array_equal(sol.values, np.transpose(sol.values, (0, 2, 1)))
    diag = np.einsum("tii->ti", sol.values)
    assert np.all(diag[:, 1:-1] > 0.0)


def test_two_point_requires_colored_and_positive_covariance(dirichlet, u0_bump):
    with pytest.raises(ValueError):
        sl.solve_two_point(problem(dirichlet, u0_bump, 1.0, horizon=2.0, dt=0.01))
    bad = sl.NoiseSpec(kind="colored", covariance="custom",
                       custom=lambda r: np.cos(3.0 * np.asarray(r)))
    p = problem(dirichlet, u0_bump, 1.0, noise=bad, horizon=2.0, nodes=32, dt=0.01)
    with pytest.raises(ValueError, match="covariance"):
        sl.solve_two_point(p)


def test_validate_covariance_cases(dirichlet):
    good = sl.validate_covariance(
        sl.NoiseSpec(kind="colored", covariance="exponential", ell=1.0), dirichlet)
    assert good.valid and good.psd and good.strictly_positive
    riesz = sl.validate_covariance(
        sl.NoiseSpec(kind="colored", covariance="riesz", alpha=0.5), dirichlet)
    assert riesz.valid and "d=1" in riesz.note
    const = sl.validate_covariance(
        sl.NoiseSpec(kind="colored", covariance="constant"), dirichlet)
    assert const.valid
    neg = sl.validate_covariance(
        sl.NoiseSpec(kind="colored", covariance="custom",
                     custom=lambda r: np.cos(3.0 * np.asarray(r))), dirichlet)
    assert not neg.valid and neg.min_value < 0
