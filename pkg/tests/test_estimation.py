"""WLS estimation, residual test, and projector algebra."""

import numpy as np
import pytest

from gridmtd.estimation import (EstimationError, bdd_alarm, flat_start,
                                projectors, residual_norm, wls_estimate)
from gridmtd.grid import StateVector, evaluate_h, measure
from gridmtd.grid.measurement import sigma_rule
from gridmtd.stats import chi2_cdf, chi2_quantile


def test_noiseless_recovery(grid14, state14):
    mv = measure(grid14, state14, noise_scale=0.0)
    res = wls_estimate(grid14, mv)
    assert res.converged
    assert np.allclose(res.state.v, state14.v, atol=1e-7)
    assert res.gamma == pytest.approx(0.0, abs=1e-12)
    assert res.objective == res.gamma


def test_noisy_estimate_stays_close(grid14, state14):
    mv = measure(grid14, state14, noise_scale=0.02, seed=0)
    res = wls_estimate(grid14, mv, init=state14)
    assert res.converged
    assert np.max(np.abs(res.state.vm - state14.vm)) < 0.02
    assert np.max(np.abs(res.state.va - state14.va)) < 0.02
    # optimum: gradient of the weighted objective vanishes
    assert res.grad_norm < 1e-3


def test_gamma_is_weighted_residual_norm(grid14, state14):
    mv = measure(grid14, state14, noise_scale=0.02, seed=1)
    res = wls_estimate(grid14, mv, init=state14)
    manual = float(np.sum((mv.z - evaluate_h(grid14, res.state)) ** 2 / mv.sigma**2))
    assert res.gamma == pytest.approx(manual, rel=1e-12)
    assert residual_norm(grid14, mv.z, mv.sigma, res.state) == pytest.approx(res.gamma)


def test_dishonest_mode_freezes_jacobian(grid14, state14):
    mv = measure(grid14, state14, noise_scale=0.02, seed=2)
    honest = wls_estimate(grid14, mv, init=state14, mode="honest")
    stale = wls_estimate(grid14, mv, init=flat_start(grid14), mode="dishonest")
    assert stale.mode == "dishonest"
    # the frozen-Jacobian solve is a different estimator; it must still be
    # finite and close-ish, but generally not identical
    assert np.all(np.isfinite(stale.state.v))
    assert not np.allclose(stale.state.v, honest.state.v, atol=1e-12)

    with pytest.raises(ValueError):
        wls_estimate(grid14, mv, mode="weird")


def test_insufficient_redundancy_raises(grid14, state14):
    z = np.ones(2 * grid14.n)
    with pytest.raises(EstimationError):
        wls_estimate(grid14, z, sigma=np.ones_like(z))


def test_raw_array_needs_sigma(grid14, state14):
    z = evaluate_h(grid14, state14)
    with pytest.raises(ValueError):
        wls_estimate(grid14, z)


def test_bdd_alarm_threshold_edge():
    assert bdd_alarm(10.0, 10.0)
    assert bdd_alarm(10.1, 10.0)
    assert not bdd_alarm(9.9, 10.0)


def test_projector_algebra(grid14, state14, sigma14):
    proj = projectors(grid14, state14, sigma14)
    p = len(sigma14)
    # idempotent, symmetric (whitened), annihilates the column space
    assert np.allclose(proj.s_whitened @ proj.s_whitened, proj.s_whitened, atol=1e-8)
    assert np.allclose(proj.s_whitened, proj.s_whitened.T, atol=1e-10)
    assert np.allclose(proj.s @ proj.s, proj.s, atol=1e-8)
    hw = proj.h / sigma14[:, None]
    assert np.max(np.abs(proj.s_whitened @ hw)) < 1e-8
    assert np.max(np.abs(proj.s @ proj.h)) < 1e-8
    assert proj.residual_dof == pytest.approx(p - 2 * grid14.n, abs=1e-6)


def test_projector_predicts_wls_residual(grid14, state14, sigma14):
    # linearized consistency: for small injected deltas, the estimator's
    # residual equals S @ delta to first order
    proj = projectors(grid14, state14, sigma14)
    rng = np.random.default_rng(4)
    delta = 1e-4 * rng.standard_normal(len(sigma14)) * sigma14
    z = evaluate_h(grid14, state14) + delta
    res = wls_estimate(grid14, z, sigma=sigma14, init=state14)
    assert np.allclose(res.residual, proj.s @ delta, atol=1e-9)


def test_gamma_chi_square_distribution(grid14, state14, sigma14):
    # batch of noisy snapshots: gamma ~ chi2 with dof = P - 2N; check the
    # empirical CDF at three quantiles (KS-style spot check)
    rng = np.random.default_rng(9)
    dof = len(sigma14) - 2 * grid14.n
    adm = grid14.admittance()
    gammas = []
    for _ in range(300):
        mv = measure(grid14, state14, noise_scale=0.02, seed=rng, adm=adm)
        gammas.append(wls_estimate(grid14, mv, init=state14, adm=adm).gamma)
    gammas = np.array(gammas)
    for q in (0.25, 0.5, 0.9):
        x = chi2_quantile(dof, 1.0 - q)
        emp = float(np.mean(gammas <= x))
        assert emp == pytest.approx(chi2_cdf(dof, x), abs=0.08)


def test_alarm_rate_matches_alpha(grid14, state14, sigma14):
    rng = np.random.default_rng(10)
    dof = len(sigma14) - 2 * grid14.n
    tau = chi2_quantile(dof, 0.02)
    adm = grid14.admittance()
    alarms = 0
    trials = 400
    for _ in range(trials):
        mv = measure(grid14, state14, noise_scale=0.02, seed=rng, adm=adm)
        res = wls_estimate(grid14, mv, init=state14, adm=adm)
        alarms += bdd_alarm(res.gamma, tau)
    assert alarms / trials == pytest.approx(0.02, abs=0.02)
