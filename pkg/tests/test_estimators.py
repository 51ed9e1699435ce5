import math

import numpy as np
import pytest

import spdelab as sl
from spdelab.estimators import PairedDifference, paired_moment_difference
from spdelab.kernels import SemigroupExpansion
from spdelab.simulate import EnsembleAccumulators

L = math.pi


def synthetic_acc(values, paths=50):
    """Accumulators for a deterministic field replicated over paths."""
    times = np.arange(values.shape[0], dtype=float)
    x = np.linspace(0, L, values.shape[1])
    a = np.abs(values)
    orders = (2, 3, 4)
    return EnsembleAccumulators(
        times=times, x=x, orders=orders,
        sums={p: paths * a ** p for p in orders},
        sumsq={p: paths * a ** (2 * p) for p in orders},
        count=paths, excluded=0)


@pytest.fixture(scope="module")
def small_ensemble(dirichlet, u0_bump):
    c = sl.SimConfig(domain=dirichlet, u0=u0_bump, lam=0.8, nodes=64, dt=1.2e-3,
                     horizon=0.5, snapshot_times=(0.1, 0.3, 0.5), master_seed=17)
    return c, sl.run_ensemble(c, 600, moments=(2, 3, 4))


def test_zero_noise_moment_equals_semigroup_power(dirichlet, u0_bump):
    c = sl.SimConfig(domain=dirichlet, u0=u0_bump, lam=0.0, nodes=64, dt=1.2e-3,
                     horizon=0.5, snapshot_times=(0.25, 0.5), master_seed=0)
    acc = sl.run_ensemble(c, 4, moments=(2, 4))
    traj2 = sl.moment_estimate(acc, 2)
    ref = sl.run_path(c, 0).snapshots  # zero-variance paths
    assert np.allclose(traj2.estimates, ref ** 2, rtol=1e-12)
    assert np.all(traj2.stderr < 1e-12)


def test_power_mean_chain_exact(small_ensemble):
    _c, acc = small_ensemble
    m2 = sl.moment_estimate(acc, 2).estimates
    m3 = sl.moment_estimate(acc, 3).estimates
    m4 = sl.moment_estimate(acc, 4).estimates
    inner = (slice(None), slice(1, -1))
    assert np.all(m2[inner] ** 0.5 <= m3[inner] ** (1 / 3) * (1 + 1e-12))
    assert np.all(m3[inner] ** (1 / 3) <= m4[inner] ** 0.25 * (1 + 1e-12))
    assert np.all(m4[inner] >= m2[inner] ** 2 * (1 - 1e-12))


def test_rate_fit_exact_exponential():
    vals = np.exp(-np.linspace(0, 5, 40))[:, None] * np.ones((1, 9))
    acc = synthetic_acc(vals)
    acc.times = np.linspace(0, 5, 40)
    traj = sl.moment_estimate(acc, 2)
    est = sl.rate_fit(traj, L / 2, window=1.0)
    assert est.rate == pytest.approx(-2.0, abs=1e-9)  # |u|^2 decays twice as fast
    assert est.ci_high - est.ci_low < 1e-6
    assert est.r2 > 0.999999


def test_rate_fit_window_error(small_ensemble):
    _c, acc = small_ensemble
    with pytest.raises(sl.WindowError):
        sl.rate_fit(sl.moment_estimate(acc, 2), L / 2)  # only 3 snapshots


def test_energy_of_constant_field():
    vals = np.ones((3, 65))
    acc = synthetic_acc(vals)
    energy = sl.energy_estimate(acc, sl.DomainSpec(length=L))
    assert np.allclose(energy.values, math.sqrt(L), rtol=1e-12)


def test_energy_sandwich(small_ensemble, dirichlet):
    _c, acc = small_ensemble
    traj = sl.moment_estimate(acc, 2)
    energy = sl.energy_estimate(acc, dirichlet)
    eps = L / 8
    inner = (acc.x >= eps) & (acc.x <= L - eps)
    for i in range(len(acc.times)):
        e2 = energy.values[i] ** 2
        assert e2 <= L * traj.estimates[i].max() * (1 + 1e-12)
        assert e2 >= (L - 2 * eps) * traj.estimates[i][inner].min() * (1 - 1e-12)


def test_stderr_scales_with_paths(dirichlet, u0_bump):
    c = sl.SimConfig(domain=dirichlet, u0=u0_bump, lam=0.8, nodes=64, dt=1.2e-3,
                     horizon=0.3, snapshot_times=(0.3,), master_seed=23)
    se = []
    for paths in (500, 2000):
        acc = sl.run_ensemble(c, paths, moments=(2,))
        traj = sl.moment_estimate(acc, 2)
        se.append(np.mean(traj.stderr[0, 1:-1]))
    assert se[0] / se[1] == pytest.approx(2.0, rel=0.15)


def test_lambda_scan_brackets_sign_change(dirichlet, u0_bump):
    # horizon short enough that sample moments still track the true growth
    c = sl.SimConfig(domain=dirichlet, u0=u0_bump, lam=1.0, nodes=32, dt=2e-3,
                     horizon=1.5, snapshot_times=tuple(np.linspace(0.075, 1.5, 20)),
                     master_seed=5)
    rows, brackets = sl.lambda_scan(c, [0.2, 2.0], paths=800)
    rates = {r["lambda"]: r["rate"] for r in rows}
    assert rates[0.2] < 0 < rates[2.0]
    assert brackets[2] == (0.2, 2.0)
    with pytest.raises(ValueError):
        sl.lambda_scan(c, [2.0, 1.0], paths=10)


def test_paired_difference_positive_mean(dirichlet, u0_bump):
    c = sl.SimConfig(domain=dirichlet, u0=u0_bump, lam=1.0, nodes=32, dt=2e-3,
                     horizon=0.5, snapshot_times=(0.25, 0.5), master_seed=9)
    out = paired_moment_difference(c, 1.0, 2.0, 400, p_orders=(2,))
    pd = out[2]
    assert isinstance(pd, PairedDifference)
    j = 16
    assert np.all(pd.mean[:, j] >= -2.0 * pd.stderr[:, j])
