"""Mild solver: rough heat convolution, Picard fixed point, the stepping
scheme, classical stencils, and perturbation/blow-up bookkeeping."""

import numpy as np
import pytest
from scipy.stats import linregress

from roughpde.controlled import zero_derivative_lift
from roughpde.gaussfield import FieldSpec, StationaryFieldSampler, lift_field
from roughpde.grid import Grid
from roughpde.rng import stream
from roughpde.smoothmap import SmoothMap
from roughpde.solver import (BlowUp, MollifiedNoise, ProblemSpec, ZeroNoise,
                             classical_solve, compensated_cells, graded_mesh,
                             perturbation_response, picard_map,
                             rough_heat_convolution, solve_fixed_point,
                             solve_stepping, stencil_derivative)

EPS_EXACT = 1e-12
EPS_FLOAT = 1e-14
EPS_CONV = 1e-6       # measured 5.3e-7: midpoint cell sums at M = 1024, tau = 1
EPS_ROUTES = 1e-10    # measured 1.0e-15 between the FFT and O(M^2) routes
EPS_LINEAR = 1e-8     # measured 3.6e-16: f = -u cancels the damping shift
EPS_SMOOTH = 1e-3     # measured 4.4e-4 against the Galerkin run at dt = 2^-13
EPS_STEP = 5e-3       # measured 2.7e-3 at dt = 2^-9

ZERO_DRIFT = SmoothMap(lambda y, x: np.zeros(y.shape),
                       lambda y, x: np.zeros(y.shape + (1,)),
                       in_dim=1, out_shape=(1,), name="zero")
SIN_TRANSPORT = SmoothMap.scalar_transport(np.sin, np.cos,
                                           lambda u: -np.sin(u))


def sine_problem(num_cells, horizon=0.25, g=SIN_TRANSPORT, **kw):
    grid = Grid(num_cells)
    u0 = np.sin(grid.nodes)[None, :]
    return ProblemSpec(ZERO_DRIFT, g, u0, horizon=horizon, **kw)


def ou_noise(n_modes, sigma, seed, dim=1):
    spec = FieldSpec(dim=dim, n_modes=n_modes, sigma=sigma)
    return StationaryFieldSampler(spec, horizon=1.0, seed=seed)


def test_graded_mesh_clusters_at_endpoint():
    mesh = graded_mesh(0.7, 0.45, cells=32)
    assert mesh[0] == 0.0
    assert abs(mesh[-1] - 0.7) < EPS_FLOAT
    steps = np.diff(mesh)
    assert np.all(steps > 0)
    # spacing shrinks monotonically toward the singular endpoint
    assert np.all(np.diff(steps) < 0)
    assert steps[-1] < steps[0] / 1e3


def test_compensated_cells_closed_form():
    grid = Grid(64)
    rough = lift_field(FieldSpec(n_modes=16).stationary_sample(stream(3)), grid)
    ones = np.ones((grid.m + 1, 1))
    # zero derivative: plain increments of the lift
    cells = compensated_cells(ones, np.zeros((grid.m + 1, 1, 1)), rough)
    assert np.max(np.abs(cells[:, 0, :] - np.diff(rough.values, axis=0))) == 0.0
    # unit derivative adds exactly the cell areas
    cells = compensated_cells(ones, np.ones((grid.m + 1, 1, 1)), rough)
    gap = cells[:, 0, :] - np.diff(rough.values, axis=0) - rough.cell_areas[:, 0, :]
    assert np.max(np.abs(gap)) < EPS_FLOAT


def test_heat_convolution_matches_spectral_route():
    # sum_cells p_tau(x - y_mid) dpsi equals d_x S_tau psi, which the grid
    # evaluates exactly in mode space
    m = 1024
    grid = Grid(m)
    coefs = FieldSpec(n_modes=m // 2 - 1).stationary_sample(stream(7))
    rough = lift_field(coefs, grid, method="exact")
    ones = zero_derivative_lift(grid.spacing, np.ones(m + 1), 1)
    tau = 1.0
    conv = rough_heat_convolution("heat", tau, ones, rough, grid)
    k = grid.wavenumbers()
    psi = rough.values[:, 0][None, :]
    ref = grid.spectral_derivative(
        grid.apply_multiplier(psi, np.exp(-k * k * tau), axis=-1), axis=-1)
    assert np.max(np.abs(conv[:, 0, 0] - ref[0])) < EPS_CONV


def test_heat_convolution_routes_agree():
    grid = Grid(512)
    coefs = FieldSpec(n_modes=255).stationary_sample(stream(5))
    rough = lift_field(coefs, grid, method="exact")
    y = zero_derivative_lift(grid.spacing, np.cos(grid.nodes), 1)
    for kind in ("heat", "heat_derivative"):
        fft = rough_heat_convolution(kind, 0.3, y, rough, grid, damping=1.0)
        direct = rough_heat_convolution(kind, 0.3, y, rough, grid,
                                        damping=1.0, method="direct")
        assert np.max(np.abs(fft - direct)) < EPS_ROUTES
    with pytest.raises(ValueError):
        rough_heat_convolution("heat", 0.0, y, rough, grid)
    with pytest.raises(ValueError):
        rough_heat_convolution("box", 0.3, y, rough, grid)
    with pytest.raises(ValueError):
        rough_heat_convolution("heat", 0.3, y, rough, grid, method="mc")


def test_derivative_kernel_age_slope():
    # sup |p'_tau * dpsi| grows like tau^(alpha/2 - 1) as the kernel ages
    # toward the rough field; measured -0.83 for the stationary spectrum
    m = 1024
    grid = Grid(m)
    coefs = FieldSpec(n_modes=m // 2 - 1).stationary_sample(stream(7))
    rough = lift_field(coefs, grid, method="exact")
    ones = zero_derivative_lift(grid.spacing, np.ones(m + 1), 1)
    taus = 2.0 ** -np.arange(0, 6)
    sups = [np.max(np.abs(rough_heat_convolution("heat_derivative", t, ones,
                                                 rough, grid)))
            for t in taus]
    slope = linregress(np.log(taus), np.log(sups)).slope
    assert abs(slope - (0.45 / 2 - 1)) < 0.15


def test_linear_problem_closed_form():
    # f(u) = -u makes the compensated drift vanish, so the fixed point is the
    # damped heat flow of u0 and the Picard map converges in one pass
    g0 = SmoothMap(lambda y, x: np.zeros(y.shape[:-1] + (1, 1)),
                   lambda y, x: np.zeros(y.shape[:-1] + (1, 1, 1)),
                   in_dim=1, out_shape=(1, 1), name="zero")
    grid = Grid(128)
    u0 = np.sin(grid.nodes)[None, :]
    spec = ProblemSpec(SmoothMap.linear([[-1.0]]), g0, u0, horizon=0.25)
    sol = solve_fixed_point(spec, ZeroNoise(), times=[0.1, 0.25])
    for t, u in zip(sol.times, sol.u):
        assert np.max(np.abs(u - np.exp(-2.0 * t) * u0)) < EPS_LINEAR
    assert sol.reconstruction_defect() < EPS_FLOAT


def test_picard_map_of_zero_is_zero():
    g0 = SmoothMap(lambda y, x: np.zeros(y.shape[:-1] + (1, 1)),
                   lambda y, x: np.zeros(y.shape[:-1] + (1, 1, 1)),
                   in_dim=1, out_shape=(1, 1), name="zero")
    grid = Grid(64)
    spec = ProblemSpec(SmoothMap.linear([[-1.0]]), g0,
                       np.cos(grid.nodes)[None, :], horizon=0.25)
    mapped = picard_map(np.zeros((9, 1, 65)), spec, ZeroNoise(),
                        t0=0.0, horizon=0.25)
    assert np.max(np.abs(mapped)) == 0.0


def test_contraction_factors_stay_small():
    spec = sine_problem(128, horizon=0.2)
    sol = solve_fixed_point(spec, ou_noise(63, 0.7, seed=19), times=[0.2])
    factors = sol.info["contraction"]
    assert len(factors) >= 2
    assert max(factors) < 0.6          # measured 0.25
    assert len(sol.info["intervals"]) == 1
    assert sol.info["halvings"] == 0


def test_fixed_point_residual_meets_tolerance():
    tol = 1e-9
    spec = sine_problem(128, g=SmoothMap.scalar_transport(
        lambda u: 1.5 + np.sin(u), np.cos))
    noise = ou_noise(31, 0.5, seed=11)
    times = np.linspace(0.0, 0.25, 9)
    sol = solve_fixed_point(spec, noise, times=times, tol=tol)
    mapped = picard_map(sol.v, spec, noise, t0=0.0, horizon=0.25)
    resid = np.max(np.abs(mapped - sol.v))     # measured 7.4e-11
    assert resid < 2.0 * tol


def test_smooth_noise_limit_matches_spectral_scheme():
    # with eight well-resolved modes the rough machinery and a plain
    # spectral exponential-Euler run land on the same trajectory
    spec = sine_problem(512)
    noise = ou_noise(8, 0.5, seed=11)
    fp = solve_fixed_point(spec, noise, times=[0.25], quad_cells=256)
    cl = classical_solve(spec, noise, 2.0 ** -13, stencil="spectral_galerkin",
                         times=[0.25])
    assert np.max(np.abs(fp.u[-1] - cl.u[-1])) < EPS_SMOOTH


def test_solver_is_deterministic():
    spec = sine_problem(128)
    runs = []
    for _ in range(2):
        noise = ou_noise(31, 0.5, seed=42)
        runs.append(solve_fixed_point(spec, noise, times=[0.1, 0.25]))
    assert np.array_equal(runs[0].u, runs[1].u)
    assert np.array_equal(runs[0].psi, runs[1].psi)


def test_stepping_converges_to_fixed_point():
    spec = sine_problem(128)
    noise = ou_noise(31, 0.5, seed=11)
    ref = solve_fixed_point(spec, noise, times=[0.25], quad_cells=256)
    errs = []
    for j in (5, 6, 7, 8, 9):
        st = solve_stepping(spec, noise, 2.0 ** -j, times=[0.25])
        errs.append(np.max(np.abs(st.u[-1] - ref.u[-1])))
    order = linregress(np.log(2.0 ** -np.arange(5, 10)), np.log(errs)).slope
    assert errs[-1] < EPS_STEP
    assert order > 0.15                # measured 0.71
    # a final partial step is integrated with its own multipliers
    part = solve_stepping(spec, noise, 0.09, times=[0.25])
    assert part.times == [0.25]
    assert np.all(np.isfinite(part.u))


def test_reconstruction_identity():
    spec = sine_problem(64)
    sol = solve_fixed_point(spec, ou_noise(15, 0.5, seed=3),
                            times=[0.0, 0.1, 0.25])
    assert sol.reconstruction_defect() < EPS_FLOAT
    assert np.array_equal(sol.u[0], spec.u0)


def test_stencil_derivative_orders():
    grid = Grid(64)
    vals = np.sin(grid.nodes)[None, :]
    exact = np.cos(grid.nodes)[None, :]
    gal = stencil_derivative(vals, grid, "spectral_galerkin")
    assert np.max(np.abs(gal - exact)) < EPS_EXACT
    cen = stencil_derivative(vals, grid, "centered")
    assert 1e-4 < np.max(np.abs(cen - exact)) < 2e-3      # h^2 / 6
    for st in ("forward", "backward"):
        err = np.max(np.abs(stencil_derivative(vals, grid, st) - exact))
        assert 0.01 < err < 0.06                          # h / 2
    with pytest.raises(ValueError):
        stencil_derivative(vals, grid, "upwind")


def test_cfl_and_smoothness_guards():
    spec = sine_problem(64)
    smooth = ou_noise(8, 0.5, seed=1)
    with pytest.raises(ValueError):
        classical_solve(spec, smooth, dt=0.1, stencil="centered")
    # the Galerkin variant has no h^2/4 restriction
    classical_solve(spec, smooth, dt=0.1, stencil="spectral_galerkin",
                    times=[0.25])
    # raw truncated noise beyond the grid band is refused ...
    with pytest.raises(ValueError):
        classical_solve(spec, ou_noise(63, 0.5, seed=1), dt=2.0 ** -10,
                        stencil="centered", times=[0.25])
    # ... but its mollification reads as a smooth continuum field
    classical_solve(spec, MollifiedNoise(ou_noise(63, 0.5, seed=1), 0.1),
                    dt=2.0 ** -10, stencil="centered", times=[0.25])


def test_conservative_form_matches_transport_form():
    # with g = G' the conservative update D G(u) and the transport update
    # g(u) D u describe the same flux; spectrally they agree to rounding,
    # for centered differences to the usual O(h^2) product-rule defect
    G = SmoothMap.componentwise(lambda u: -np.cos(u), np.sin, np.cos,
                                dim=1, name="potential")
    spec = sine_problem(128)
    noise = ou_noise(8, 0.5, seed=11)
    for st, tol in (("spectral_galerkin", EPS_EXACT), ("centered", 1e-3)):
        a = classical_solve(spec, noise, 2.0 ** -13, stencil=st, times=[0.25])
        b = classical_solve(spec, noise, 2.0 ** -13, stencil=st, times=[0.25],
                            conservative=G)
        assert np.max(np.abs(a.u[-1] - b.u[-1])) < tol


def test_mollified_noise_is_continuum_sampling():
    base = ou_noise(127, 1.0, seed=17)
    noise = MollifiedNoise(base, eps=0.05)
    coarse = Grid(16)
    vals = noise.node_values(0.125, coarse)
    coefs = noise.coefficients(0.125)
    k = np.arange(coefs.shape[1])
    manual = (coefs[:, :1].real
              + 2.0 * (coefs[:, 1:, None]
                       * np.exp(1j * np.outer(k[1:], coarse.nodes))[None])
              .real.sum(axis=1))
    assert np.max(np.abs(vals - manual)) < EPS_EXACT
    # mode k is damped by exp(-(eps k)^2 / 2)
    ratio = noise.coefficients(0.125)[0, 40] / base.coefficients(0.125)[0, 40]
    assert abs(ratio - np.exp(-(0.05 * 40) ** 2 / 2.0)) < EPS_EXACT


def test_mollified_classical_approaches_rough_solution():
    # centered scheme on mollified noise walks toward the rough fixed point
    # as the mollification scale shrinks
    spec = sine_problem(256, g=SmoothMap.scalar_transport(
        lambda u: 1.5 + np.sin(u), np.cos))
    base = ou_noise(127, 1.0, seed=11)
    rough = solve_fixed_point(spec, base, times=[0.25])
    gaps = []
    for eps in (0.2, 0.1, 0.05):
        cl = classical_solve(spec, MollifiedNoise(base, eps), 2.0 ** -13,
                             stencil="centered", times=[0.25])
        gaps.append(np.max(np.abs(cl.u[-1] - rough.u[-1])))
    assert gaps[1] < 0.95 * gaps[0]    # measured 0.55, 0.42, 0.30
    assert gaps[2] < 0.95 * gaps[1]


def test_blowup_is_monotone_in_radius():
    cubic = SmoothMap.componentwise(lambda u: u ** 3, lambda u: 3 * u * u,
                                    lambda u: 6 * u, dim=1, name="cubic")
    grid = Grid(128)
    u0 = 3.0 * np.sin(grid.nodes)[None, :]
    times = []
    for bf in (5.0, 10.0):
        spec = ProblemSpec(cubic, SIN_TRANSPORT, u0, horizon=1.0,
                           blowup_factor=bf)
        with pytest.raises(BlowUp) as info:
            solve_stepping(spec, ZeroNoise(), dt=1e-3, times=[1.0])
        assert info.value.norm > info.value.radius
        assert 0.0 < info.value.time < 1.0
        times.append(info.value.time)
    assert times[0] <= times[1]


def test_perturbation_response_inputs_and_outputs():
    spec = sine_problem(128, horizon=0.3, g=SmoothMap.scalar_transport(
        lambda u: 1.5 + np.sin(u), np.cos))
    noise = ou_noise(31, 0.5, seed=11)
    rep = perturbation_response(spec, noise, spec, noise, times=[0.05, 0.25])
    assert rep["delta_in"] == 0.0
    assert rep["delta_out"] == 0.0
    assert rep["blown_up"] is None
    # a small smooth shift of u0 decays but is not annihilated
    grid = spec.grid
    bumped = ProblemSpec(ZERO_DRIFT, spec.g,
                         spec.u0 + 1e-3 * np.cos(grid.nodes)[None, :],
                         horizon=0.3)
    rep = perturbation_response(spec, noise, bumped, noise,
                                times=[0.05, 0.25])
    assert 0.0 < rep["delta_out"] < rep["delta_in"]    # measured ratio 0.98
    assert rep["delta_out"] > 0.2 * rep["delta_in"]
    assert rep["initial"] > 0.0 and rep["level1"] == 0.0 and rep["area"] == 0.0


def cross_transport():
    """g(u) = [[0, sin u1], [sin u2, 0]] with the cross dependence that makes
    antisymmetric area perturbations visible to the solver."""
    def apply(y, x):
        out = np.zeros(y.shape[:-1] + (2, 2))
        out[..., 0, 1] = np.sin(y[..., 0])
        out[..., 1, 0] = np.sin(y[..., 1])
        return out

    def jac(y, x):
        out = np.zeros(y.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 0] = np.cos(y[..., 0])
        out[..., 1, 0, 1] = np.cos(y[..., 1])
        return out

    return SmoothMap(apply, jac, in_dim=2, out_shape=(2, 2), name="cross")


def test_area_shift_alters_solution():
    # perturbing only the second level of the lift (pure area shift) moves
    # the solution: the input distance is all area, the response is O(it)
    grid = Grid(128)
    f0 = SmoothMap(lambda y, x: np.zeros(y.shape),
                   lambda y, x: np.zeros(y.shape + (2,)),
                   in_dim=2, out_shape=(2,), name="zero")
    u0 = np.stack([np.sin(grid.nodes), np.cos(grid.nodes)])
    noise = ou_noise(31, 0.5, seed=7, dim=2)
    antisym = np.array([[0.0, 1.0], [-1.0, 0.0]])
    shift = 0.1 * grid.nodes[:, None, None] * antisym
    plain = ProblemSpec(f0, cross_transport(), u0, horizon=0.3)
    shifted = ProblemSpec(f0, cross_transport(), u0, horizon=0.3,
                          area_shift=shift)
    rep = perturbation_response(plain, noise, shifted, noise,
                                times=[0.05, 0.25])
    assert rep["initial"] == 0.0 and rep["level1"] == 0.0
    assert rep["area"] > 0.1
    assert rep["delta_out"] > 1e-3     # measured 3.3e-2
    assert rep["delta_out"] < rep["delta_in"]


def test_problem_spec_validation():
    grid = Grid(32)
    u0 = np.sin(grid.nodes)[None, :]
    with pytest.raises(ValueError):
        ProblemSpec(ZERO_DRIFT, SIN_TRANSPORT, u0, alpha=0.30)
    with pytest.raises(ValueError):
        ProblemSpec(ZERO_DRIFT, SIN_TRANSPORT, u0, alpha=0.45, beta=0.44)
    with pytest.raises(ValueError):
        ProblemSpec(ZERO_DRIFT, SIN_TRANSPORT, u0 + grid.nodes)  # not periodic
    with pytest.raises(ValueError):
        ProblemSpec(ZERO_DRIFT, SIN_TRANSPORT, u0, horizon=-1.0)
    with pytest.raises(ValueError):
        ProblemSpec(ZERO_DRIFT, SIN_TRANSPORT, u0,
                    area_shift=np.zeros((grid.m, 1, 1)))
    cross = cross_transport()
    with pytest.raises(ValueError):
        ProblemSpec(ZERO_DRIFT, cross, u0)       # g dimension mismatch
