"""Spectral noise field: covariance, synthesis, rough lift, and samplers."""

import numpy as np
import pytest
from scipy.stats import linregress

from roughpde.gaussfield import (CoupledStationarySampler, FieldSpec,
                                 StationaryFieldSampler, covariance_exact,
                                 covariance_spectral, evaluate_field,
                                 evaluate_field_dense, increment_variance,
                                 lift_field, pointwise_variance,
                                 sample_trajectory)
from roughpde.grid import Grid
from roughpde.rng import stream

EPS_EXACT = 1e-12
VAR_POINTWISE = 0.50187094    # coth(pi)/2
COV_ANTIPODE = 0.04329477     # 1/(2 sinh pi)


def test_covariance_constants():
    assert abs(covariance_exact(0.0) - VAR_POINTWISE) < 1e-8
    assert abs(covariance_exact(np.pi) - COV_ANTIPODE) < 1e-8
    # 2*pi periodicity and symmetry of the closed form
    x = np.linspace(0, 2 * np.pi, 9)
    assert np.max(np.abs(covariance_exact(x) - covariance_exact(-x))) < EPS_EXACT
    assert np.max(np.abs(covariance_exact(x) - covariance_exact(x + 2 * np.pi))) < EPS_EXACT


def test_spectral_covariance_approaches_closed_form():
    # truncation tail of sum 2/(2 pi k^2) is ~ 1/(pi N)
    spec = FieldSpec(n_modes=4000)
    x = np.linspace(0, 2 * np.pi, 33)
    err = np.max(np.abs(covariance_spectral(spec, x) - covariance_exact(x)))
    assert err < 1e-4
    assert abs(pointwise_variance(spec) - VAR_POINTWISE) < 1e-4
    coarse = np.max(np.abs(covariance_spectral(FieldSpec(n_modes=100), x)
                           - covariance_exact(x)))
    assert coarse > err   # tail really does shrink with the cutoff


def test_synthesis_matches_dense_sum():
    spec = FieldSpec(dim=2, n_modes=20)
    coefs = spec.stationary_sample(stream(42))
    grid = Grid(64)
    fast = evaluate_field(coefs, grid)
    dense = evaluate_field_dense(coefs, grid.nodes)
    assert np.max(np.abs(fast - dense)) < EPS_EXACT


def test_coarse_grid_synthesis_folds_exactly():
    spec = FieldSpec(n_modes=20)
    coefs = spec.stationary_sample(stream(1))
    coarse = Grid(8)
    with pytest.raises(ValueError):
        evaluate_field(coefs, coarse)
    folded = evaluate_field(coefs, coarse, fold=True)
    dense = evaluate_field_dense(coefs, coarse.nodes)
    assert np.max(np.abs(folded - dense)) < EPS_EXACT


def test_lift_exact_vs_quadrature():
    spec = FieldSpec(dim=2, n_modes=20)
    coefs = spec.stationary_sample(stream(9))
    grid = Grid(256)
    exact = lift_field(coefs, grid, method="exact")
    quad = lift_field(coefs, grid, method="quadrature")
    assert np.max(np.abs(exact.cell_areas - quad.cell_areas)) < 1e-9
    assert np.max(np.abs(exact.values - quad.values)) < EPS_EXACT


def test_lift_structure():
    spec = FieldSpec(dim=2, n_modes=16)
    coefs = spec.stationary_sample(stream(3))
    grid = Grid(128)
    rp = lift_field(coefs, grid)
    assert rp.chen_defect() < EPS_EXACT
    # diagonal area of a canonical lift is the exact square identity
    for i in range(2):
        dx = np.diff(rp.values[:, i])
        assert np.max(np.abs(rp.cell_areas[:, i, i] - 0.5 * dx**2)) < EPS_EXACT
    # symmetric part over any window is determined by the increment
    full = rp.area(0, grid.m)
    inc = rp.increment(0, grid.m)
    sym = 0.5 * (full + full.T)
    assert np.max(np.abs(sym - 0.5 * np.outer(inc, inc))) < EPS_EXACT


def test_stationary_mode_variances():
    spec = FieldSpec(n_modes=8)
    rng = stream(7)
    samples = np.array([spec.stationary_sample(rng) for _ in range(3000)])
    var_re = samples.real.var(axis=0)[0]
    var_im = samples.imag.var(axis=0)[0]
    std = spec.mode_std()
    assert np.max(np.abs(var_re / std[:, 0]**2 - 1)) < 0.12
    assert np.max(np.abs(var_im[1:] / std[1:, 1]**2 - 1)) < 0.12
    assert var_im[0] == 0.0   # zero mode is real


def test_increment_variance_formula():
    spec = FieldSpec(n_modes=32)
    times = np.linspace(0.0, 2.0, 201)
    grid = Grid(128)
    vals = np.stack([evaluate_field(sample_trajectory(spec, times, seed=s)[:, 0, :], grid)
                     for s in range(400)])
    for lag in (1, 10):
        emp = (vals[:, lag] - vals[:, 0]).var()
        assert abs(emp / increment_variance(spec, lag * 0.01) - 1) < 0.1


def test_temporal_increments_scale_like_sqrt_tau():
    spec = FieldSpec(n_modes=512)
    taus = np.logspace(-3, -1, 9)
    fit = linregress(np.log(taus), np.log(increment_variance(spec, taus)))
    assert abs(fit.slope - 0.5) < 0.06


def test_bridge_sampler_is_query_order_independent():
    spec = FieldSpec(n_modes=8)
    a = StationaryFieldSampler(spec, horizon=1.0, seed=5)
    ca, cb = a.coefficients(0.3).copy(), a.coefficients(0.7).copy()
    b = StationaryFieldSampler(spec, horizon=1.0, seed=5)
    assert np.array_equal(b.coefficients(0.7), cb)
    assert np.array_equal(b.coefficients(0.3), ca)
    # refining a mesh later reuses the values already drawn
    c = StationaryFieldSampler(spec, horizon=1.0, seed=5)
    for t in np.linspace(0.05, 0.95, 19):
        c.coefficients(t)
    assert np.array_equal(c.coefficients(0.3), ca)
    # a different seed decorrelates
    d = StationaryFieldSampler(spec, horizon=1.0, seed=6)
    assert np.max(np.abs(d.coefficients(0.3) - ca)) > 1e-3


def test_bridge_conditional_matches_gaussian_conditioning():
    # the sampler's bridge formula against a brute-force Schur complement
    gam = 2.3
    ta, tm, tb = 0.0, 0.4, 1.0
    cov = np.array([[1.0, np.exp(-gam * (tm - ta)), np.exp(-gam * (tb - ta))],
                    [np.exp(-gam * (tm - ta)), 1.0, np.exp(-gam * (tb - tm))],
                    [np.exp(-gam * (tb - ta)), np.exp(-gam * (tb - tm)), 1.0]])
    s12 = cov[1, [0, 2]]
    s22 = cov[np.ix_([0, 2], [0, 2])]
    w = np.linalg.solve(s22, s12)
    rho1, rho2 = np.exp(-gam * (tm - ta)), np.exp(-gam * (tb - tm))
    v1, v2 = 1 - rho1**2, 1 - rho2**2
    var = 1.0 / (1.0 / v1 + rho2**2 / v2)
    assert abs(var - (cov[1, 1] - s12 @ w)) < EPS_EXACT
    aa, bb = 0.7, -0.3
    assert abs(var * (rho1 * aa / v1 + rho2 * bb / v2) - w @ [aa, bb]) < EPS_EXACT


def test_bridge_sampler_marginals():
    spec = FieldSpec(n_modes=4)
    vals_a, vals_b = [], []
    for seed in range(1500):
        sp = StationaryFieldSampler(spec, horizon=1.0, seed=seed)
        vals_a.append(sp.coefficients(0.37)[0])
        vals_b.append(sp.coefficients(0.62)[0])
    vals_a, vals_b = np.array(vals_a), np.array(vals_b)
    std = spec.mode_std()
    assert np.max(np.abs(vals_a.real.var(axis=0) / std[:, 0]**2 - 1)) < 0.15
    corr = (vals_a.real * vals_b.real).mean(axis=0) / std[:, 0]**2
    assert np.max(np.abs(corr - np.exp(-spec.rates() * 0.25))) < 0.1


def test_coupled_sampler_stationary_statistics():
    spec = FieldSpec(n_modes=4)
    vals0, vals1 = [], []
    for seed in range(3000):
        c = CoupledStationarySampler(spec, [0.1], seed=seed)
        c.advance(0.123)
        c.advance(0.2)
        vals0.append(c.state[0, :, 0, 0].copy())
        vals1.append(c.state[0, :, 0, 1].copy())
    vals0, vals1 = np.array(vals0), np.array(vals1)
    k = spec.wavenumbers()
    g0 = spec.rates()
    g1 = 1.0 + k**2 + 0.1**2 * k**4
    weight = np.where(k == 0, 1 / (2 * np.pi), 1 / (4 * np.pi))
    assert np.max(np.abs(vals0.var(axis=0) / (weight / g0) - 1)) < 0.15
    assert np.max(np.abs(vals1.var(axis=0) / (weight / g1) - 1)) < 0.15
    cross = np.where(k == 0, 1 / np.pi, 1 / (2 * np.pi)) / (g0 + g1)
    assert np.max(np.abs((vals0 * vals1).mean(axis=0) / cross - 1)) < 0.15


def test_coupled_sampler_zero_mode_degeneracy():
    # at k = 0 every regularization has the same rate, so the components are
    # literally the same process; the PSD square root must respect that
    spec = FieldSpec(n_modes=8)
    c = CoupledStationarySampler(spec, [0.1, 0.5], seed=2)
    c.advance(0.3)
    zero = c.state[:, 0, 0, :]
    # the eigendecomposition square root of the exactly singular covariance
    # ties the copies together at sqrt-machine precision
    assert np.max(np.abs(zero - zero[:, :1])) < 1e-6
    assert np.max(np.abs(c.state[:, 0, 1, :])) == 0.0


def test_trajectory_input_validation():
    spec = FieldSpec(n_modes=4)
    with pytest.raises(ValueError):
        sample_trajectory(spec, [0.0, 0.5, 0.5], seed=1)
    sp = StationaryFieldSampler(spec, horizon=1.0, seed=1)
    with pytest.raises(ValueError):
        sp.coefficients(1.5)
    with pytest.raises(ValueError):
        FieldSpec(sigma=-1.0)
    # sigma = 0 is legal and gives the zero field
    coefs = FieldSpec(n_modes=8, sigma=0.0).stationary_sample(stream(0))
    assert np.max(np.abs(coefs)) == 0.0


def test_single_mode_synthesis_and_parseval():
    grid = Grid(64)
    coefs = np.zeros((1, 5), dtype=complex)
    coefs[0, 1] = 0.5
    vals = evaluate_field(coefs, grid)
    assert np.max(np.abs(vals[0] - np.cos(grid.nodes))) < EPS_EXACT
    # discrete Parseval: mean of psi^2 over the circle = sum of |a_k|^2 weights
    spec = FieldSpec(n_modes=24)
    a = spec.stationary_sample(stream(77))
    vals = evaluate_field(a, Grid(128))[0]
    mean_sq = np.mean(vals[:-1] ** 2)
    modes = a[0]
    spectral = modes[0].real ** 2 + 2 * np.sum(np.abs(modes[1:]) ** 2)
    assert abs(mean_sq - spectral) < 1e-10
