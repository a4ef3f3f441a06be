"""Stationary Gaussian noise field on the circle with Ornstein-Uhlenbeck
dynamics in time, plus its canonical rough lift in space.

The field is a truncated Fourier series psi(t, x) = sum_k a_k(t) e^{ikx} with
independent complex OU modes: rate gamma_k = c + k^2 (+ eps^2 k^4 for the
hyperviscous variant), and stationary variances

    Var Re a_k = Var Im a_k = sigma^2 / (4 pi gamma_k)   (k >= 1)
    Var a_0    = sigma^2 / (2 pi gamma_0)                (a_0 real).

For c = sigma = 1 this makes the spatial covariance cosh(pi - |x|)/(2 sinh pi),
so the pointwise variance is coth(pi)/2.  Spatial regularity is Brownian-like:
alpha-Hoelder for any alpha < 1/2, which is why lifts carry second-order data.
"""

import numpy as np
from scipy.signal import fftconvolve

from .grid import TWO_PI
from .rng import counter_stream, stream
from .roughpath import RoughPath, gauss_legendre_cell


class FieldSpec:
    """Shape of the noise field: mode count, damping, and amplitude."""

    def __init__(self, dim=1, n_modes=64, damping=1.0, sigma=1.0, hyper_eps=0.0):
        if n_modes < 1:
            raise ValueError("need at least one nonzero mode")
        if damping <= 0:
            raise ValueError("damping must be positive")
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.dim = int(dim)
        self.n_modes = int(n_modes)
        self.damping = float(damping)
        self.sigma = float(sigma)
        self.hyper_eps = float(hyper_eps)

    def __repr__(self):
        return (f"FieldSpec(dim={self.dim}, n_modes={self.n_modes}, "
                f"damping={self.damping:g}, sigma={self.sigma:g}, "
                f"hyper_eps={self.hyper_eps:g})")

    def wavenumbers(self):
        return np.arange(self.n_modes + 1)

    def rates(self):
        k = self.wavenumbers()
        return self.damping + k**2 + self.hyper_eps**2 * k**4

    def mode_std(self):
        """Per-component stds, shape (n_modes+1, 2) for (real, imag) parts."""
        g = self.rates()
        std = np.empty((self.n_modes + 1, 2))
        std[:, 0] = self.sigma / np.sqrt(4 * np.pi * g)
        std[:, 1] = std[:, 0]
        std[0, 0] = self.sigma / np.sqrt(2 * np.pi * g[0])
        std[0, 1] = 0.0
        return std

    def stationary_sample(self, rng):
        """Coefficients a_k, shape (dim, n_modes+1) complex."""
        z = rng.standard_normal((self.dim, self.n_modes + 1, 2))
        std = self.mode_std()
        return z[..., 0] * std[:, 0] + 1j * z[..., 1] * std[:, 1]


def pointwise_variance(spec):
    """Stationary Var psi(x) for one component, from the mode sum."""
    g = spec.rates()
    return spec.sigma**2 / (2 * np.pi) * (1.0 / g[0] + 2 * np.sum(1.0 / g[1:]))


def covariance_spectral(spec, x):
    """E psi(y) psi(y + x) from the truncated mode sum."""
    g = spec.rates()
    k = spec.wavenumbers()[1:]
    x = np.asarray(x, dtype=float)
    tail = 2 * np.sum(np.cos(np.multiply.outer(x, k)) / g[1:], axis=-1)
    return spec.sigma**2 / (2 * np.pi) * (1.0 / g[0] + tail)


def covariance_exact(x, sigma=1.0):
    """Closed-form covariance for damping 1 and all modes: the 2*pi-periodic
    sum of cos(kx)/(1+k^2) collapses to a hyperbolic cosine."""
    x = np.abs(np.asarray(x, dtype=float)) % TWO_PI
    return sigma**2 * np.cosh(np.pi - x) / (2 * np.sinh(np.pi))


def increment_variance(spec, tau):
    """E |psi_{t+tau}(x) - psi_t(x)|^2 per component (order sqrt(tau) small).

    Each mode contributes 2 E|a_k|^2 (1 - e^{-gamma_k tau}) -- stationary
    covariance of a difference."""
    g = spec.rates()
    tau = np.asarray(tau, dtype=float)
    w = np.full(g.shape, 2.0)
    w[0] = 1.0
    decay = 1.0 - np.exp(-np.multiply.outer(tau, g))
    return spec.sigma**2 / np.pi * np.sum(w * decay / g, axis=-1)


# ---------------------------------------------------------------------------
# synthesis

def _fold_spectrum(coefs_full, offset, m):
    """Exact node synthesis helper: wrap coefficients c_l (l = -offset..offset)
    onto the m-point grid, where e^{ilx_j} = e^{i(l mod m)x_j}."""
    ell = np.arange(-offset, offset + 1)
    spec = np.zeros(coefs_full.shape[:-1] + (m,), dtype=complex)
    np.add.at(spec.reshape(-1, m), (slice(None), ell % m),
              coefs_full.reshape(-1, coefs_full.shape[-1]))
    return spec


def _synthesize(coefs_full, offset, grid):
    """Values of sum_l c_l e^{ilx} at the grid nodes (exact, any resolution)."""
    spec = _fold_spectrum(coefs_full, offset, grid.m)
    vals = np.fft.ifft(spec * grid.m, axis=-1)
    return grid.close_nodes(vals, axis=-1)


def _full_coefs(a):
    """Half-spectrum (.., n+1) -> full conjugate-symmetric (.., 2n+1)."""
    return np.concatenate([np.conj(a[..., :0:-1]), a], axis=-1)


def evaluate_field(coefs, grid, fold=False):
    """Real node values (dim, M+1) of the field with the given coefficients.

    Raises when the grid cannot resolve the top mode, because the folded
    (aliased) values are a different function; pass fold=True to accept the
    exact-at-nodes aliased synthesis on coarse grids.
    """
    coefs = np.atleast_2d(np.asarray(coefs, dtype=complex))
    n = coefs.shape[-1] - 1
    if not fold and grid.m < 2 * n + 2:
        raise ValueError(f"grid M={grid.m} cannot resolve mode {n}; "
                         "refine the grid or pass fold=True")
    vals = _synthesize(_full_coefs(coefs), n, grid)
    return np.real(vals)


def evaluate_field_deriv(coefs, grid, fold=False):
    coefs = np.atleast_2d(np.asarray(coefs, dtype=complex))
    k = np.arange(coefs.shape[-1])
    return evaluate_field(coefs * (1j * k), grid, fold=fold)


def evaluate_field_dense(coefs, x):
    """Direct O(N * len(x)) synthesis at arbitrary points (reference route)."""
    coefs = np.atleast_2d(np.asarray(coefs, dtype=complex))
    k = np.arange(coefs.shape[-1])
    phases = np.exp(1j * np.multiply.outer(k, np.asarray(x, dtype=float)))
    vals = np.einsum("dk,kx->dx", coefs, phases)
    return np.real(2 * vals - coefs[:, :1].real)


# ---------------------------------------------------------------------------
# rough lift in space

def lift_field(coefs, grid, method="exact"):
    """Canonical rough lift of the field over the spatial grid.

    "exact" integrates the trig polynomials in closed form: the product
    psi^i (psi^j)' has convolution coefficients, its antiderivative is again a
    trig polynomial plus a linear term, and both are evaluated exactly at the
    nodes.  "quadrature" uses per-cell Gauss-Legendre on dense evaluations
    (slower; kept as an independent cross-check).
    """
    coefs = np.atleast_2d(np.asarray(coefs, dtype=complex))
    values = evaluate_field(coefs, grid, fold=True).T    # (M+1, d)
    if method == "quadrature":
        areas = _areas_quadrature(coefs, grid)
    elif method == "exact":
        areas = _areas_exact(coefs, grid)
    else:
        raise ValueError(f"unknown lift method {method!r}")
    return RoughPath(grid.spacing, values, areas)


def _areas_exact(coefs, grid):
    d, n1 = coefs.shape
    n = n1 - 1
    ell = np.arange(-n, n + 1)
    full = _full_coefs(coefs)                            # (d, 2n+1)
    dfull = full * (1j * ell)
    m_idx = np.arange(-2 * n, 2 * n + 1)
    areas = np.empty((grid.m, d, d))
    for i in range(d):
        for j in range(d):
            prod = fftconvolve(full[i], dfull[j])        # coefs of psi^i (psi^j)'
            c0 = prod[2 * n].real
            anti = np.where(m_idx != 0, prod / np.where(m_idx == 0, 1, 1j * m_idx), 0)
            t_nodes = np.real(_synthesize(anti, 2 * n, grid))
            psi_i = np.real(_synthesize(full[i], n, grid))
            psi_j = np.real(_synthesize(full[j], n, grid))
            areas[:, i, j] = (np.diff(t_nodes) + c0 * grid.spacing
                              - psi_i[:-1] * np.diff(psi_j))
    return areas


def _areas_quadrature(coefs, grid, order=8):
    d = coefs.shape[0]
    z, w = gauss_legendre_cell(order)
    h = grid.spacing
    xq = (grid.nodes[:-1, None] + h * z[None, :]).ravel()
    vals = evaluate_field_dense(coefs, xq).reshape(d, grid.m, len(z))
    k = np.arange(coefs.shape[-1])
    dvals = evaluate_field_dense(coefs * (1j * k), xq).reshape(d, grid.m, len(z))
    left = evaluate_field(coefs, grid, fold=True)[:, :-1]
    rel = vals - left[:, :, None]
    return h * np.einsum("q,icq,jcq->cij", w, rel, dvals)


# ---------------------------------------------------------------------------
# sampling in time

def _sqrt_psd(cov):
    """Batched symmetric square root; tolerates the exactly singular case
    (components with equal rates are copies of one another)."""
    w, v = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    return np.einsum("...ab,...b,...cb->...ac", v, np.sqrt(w), v)

class StationaryFieldSampler:
    """Deterministic stationary trajectory, queryable at arbitrary times.

    Times are snapped to a 2^40-tick lattice on [0, horizon] and values are
    filled in by recursive OU bridging along the dyadic bisection tree, with
    the Gaussian draw for each tick coming from a counter-based generator
    keyed by that tick.  The value at any tick therefore never depends on the
    order (or set) of queries -- refining a time mesh later reuses exactly the
    noise already seen.
    """

    DEPTH = 40

    def __init__(self, spec, horizon, seed, stream_id=0):
        self.spec = spec
        self.horizon = float(horizon)
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.ticks = 1 << self.DEPTH
        self._rates = spec.rates()
        self._std = spec.mode_std()                      # (n+1, 2)
        self._cache = {}
        z0 = self._draw(0)
        self._cache[0] = z0                              # unit-variance state
        rho = self._decay(self.ticks)
        zh = self._draw(self.ticks)
        self._cache[self.ticks] = rho * z0 + np.sqrt(1.0 - rho**2) * zh

    def _draw(self, tick):
        gen = counter_stream(self.seed, self.stream_id, tick)
        return gen.standard_normal((self.spec.dim, self.spec.n_modes + 1, 2))

    def _decay(self, dticks):
        dt = dticks * (self.horizon / self.ticks)
        return np.exp(-self._rates * dt)[None, :, None]

    def _bridge(self, lo, hi):
        """Materialize the midpoint of [lo, hi] given cached endpoints."""
        mid = (lo + hi) // 2
        rho1 = self._decay(mid - lo)
        rho2 = self._decay(hi - mid)
        v1 = 1.0 - rho1**2
        v2 = 1.0 - rho2**2
        var = 1.0 / (1.0 / v1 + rho2**2 / v2)
        mean = var * (rho1 * self._cache[lo] / v1 + rho2 * self._cache[hi] / v2)
        self._cache[mid] = mean + np.sqrt(var) * self._draw(mid)
        return mid

    def _tick_of(self, t):
        if not (0.0 <= t <= self.horizon):
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        return int(round(t / self.horizon * self.ticks))

    def coefficients(self, t):
        """Mode coefficients at time t, shape (dim, n_modes+1) complex."""
        tick = self._tick_of(t)
        if tick not in self._cache:
            lo, hi = 0, self.ticks
            while True:
                mid = (lo + hi) // 2
                if mid not in self._cache:
                    self._bridge(lo, hi)
                if tick == mid:
                    break
                elif tick < mid:
                    hi = mid
                else:
                    lo = mid
        z = self._cache[tick]
        return z[..., 0] * self._std[:, 0] + 1j * z[..., 1] * self._std[:, 1]

    def node_values(self, t, grid, fold=False):
        return evaluate_field(self.coefficients(t), grid, fold=fold)

    def lift(self, t, grid, method="exact"):
        return lift_field(self.coefficients(t), grid, method=method)


def sample_trajectory(spec, times, seed, stream_id=0):
    """Exact sequential OU sampling of the coefficients on a fixed time grid.

    Returns (len(times), dim, n_modes+1) complex.  Unlike the bridge sampler
    the output depends on the whole grid, so use it for fixed-mesh runs.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    rng = stream(seed, stream_id)
    std = spec.mode_std()
    g = spec.rates()
    shape = (spec.dim, spec.n_modes + 1, 2)
    z = rng.standard_normal(shape)
    out = np.empty((len(times),) + shape)
    out[0] = z
    for i in range(1, len(times)):
        rho = np.exp(-g * (times[i] - times[i - 1]))[None, :, None]
        out[i] = rho * out[i - 1] + np.sqrt(1 - rho**2) * rng.standard_normal(shape)
    return out[..., 0] * std[:, 0] + 1j * out[..., 1] * std[:, 1]


class CoupledStationarySampler:
    """Joint trajectories of the field and its hyperviscous regularizations,
    all driven by the same white noise (sequential in time).

    Per mode k the vector of components (one per eps, eps=0 first) is a joint
    OU process with rates gamma^eps_k and common noise intensity
    s_k^2 = sigma^2/(2 pi) (s_0^2 = sigma^2/pi on the real part), giving
    stationary covariance s^2/(gamma_a + gamma_b) and one-step innovation
    covariance s^2 (1 - e^{-(gamma_a+gamma_b) dt})/(gamma_a + gamma_b).
    """

    def __init__(self, spec, eps_values, seed, stream_id=0):
        self.spec = spec
        self.eps = np.concatenate([[0.0], np.asarray(eps_values, dtype=float)])
        if spec.hyper_eps != 0.0:
            raise ValueError("base spec must have hyper_eps = 0")
        k = spec.wavenumbers()
        self._g = spec.damping + k**2 + np.multiply.outer(self.eps**2, k**4)  # (E, n+1)
        self._rng = stream(seed, stream_id)
        gsum = self._g[:, None, :] + self._g[None, :, :]                      # (E, E, n+1)
        s2 = np.full(spec.n_modes + 1, spec.sigma**2 / (2 * np.pi))
        self._s2 = s2
        cov = np.moveaxis(s2 / gsum, -1, 0)                                   # (n+1, E, E)
        self._stat_chol = _sqrt_psd(cov)
        self.state = self._init_state()
        self.time = 0.0

    def _init_state(self):
        n1 = self.spec.n_modes + 1
        e = len(self.eps)
        z = self._rng.standard_normal((self.spec.dim, n1, 2, e))
        state = np.einsum("kab,dkcb->dkca", self._stat_chol, z)
        # mode 0: real part has doubled noise intensity, imaginary part absent
        state[:, 0, 0, :] *= np.sqrt(2.0)
        state[:, 0, 1, :] = 0.0
        return state                                                          # (d, n+1, 2, E)

    def advance(self, dt):
        """Step every component forward by dt with the exact joint transition."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        gsum = self._g[:, None, :] + self._g[None, :, :]
        cov = np.moveaxis(self._s2 * (1 - np.exp(-gsum * dt)) / gsum, -1, 0)
        chol = _sqrt_psd(cov)
        decay = np.exp(-self._g * dt).T[:, None, :]                           # (n+1, 1, E)
        n1 = self.spec.n_modes + 1
        z = self._rng.standard_normal((self.spec.dim, n1, 2, len(self.eps)))
        innov = np.einsum("kab,dkcb->dkca", chol, z)
        innov[:, 0, 0, :] *= np.sqrt(2.0)
        innov[:, 0, 1, :] = 0.0
        self.state = self.state * decay + innov
        self.time += dt
        return self.state

    def coefficients(self, eps_index):
        s = self.state[..., eps_index]
        return s[..., 0] + 1j * s[..., 1]
