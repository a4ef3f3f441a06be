"""Heat-type semigroups on the circle.

Everything dissipative is applied spectrally: the damped / hyperviscous
semigroup acts mode-by-mode through the exact multiplier

    m_k(t) = exp(-t (c + k^2 + eps^2 k^4)),    c in {0, 1},

so the stiff part of the dynamics carries no quadrature error.  Real-space
kernels (periodic heat kernel, its derivative, and the quartic kernel of the
pure-hyperviscous factor) are provided for diagnostics and for the
kernel-weighted sums in the rough convolution; each has two independent
evaluation routes so they can cross-check one another.
"""

import numpy as np
from scipy.integrate import quad

from .grid import TWO_PI
from .norms import holder_norm, holder_seminorm

_GAUSS_TRANSFORM = lambda z: np.exp(-z * z / 2.0)  # noqa: E731


class SemigroupSpec:
    """Damping constant and hyperviscosity strength of the linear part."""

    def __init__(self, damping=1.0, hyper_eps=0.0):
        if damping not in (0.0, 1.0):
            raise ValueError("damping must be 0 or 1")
        if hyper_eps < 0:
            raise ValueError("hyperviscosity strength must be nonnegative")
        self.damping = float(damping)
        self.hyper_eps = float(hyper_eps)

    def rates(self, k):
        k = np.asarray(k, dtype=float)
        return self.damping + k**2 + self.hyper_eps**2 * k**4

    def multiplier(self, k, t):
        if t < 0:
            raise ValueError("time must be nonnegative")
        return np.exp(-t * self.rates(k))

    def __repr__(self):
        return f"SemigroupSpec(damping={self.damping:g}, hyper_eps={self.hyper_eps:g})"


def apply_semigroup(values, t, grid, spec=None, axis=0):
    """Evolve node values by the semigroup for time t (spectrally exact)."""
    spec = spec or SemigroupSpec()
    return grid.apply_multiplier(values, spec.multiplier(grid.wavenumbers(), t),
                                 axis=axis)


def apply_quartic(values, t, grid, axis=0):
    """The pure-quartic factor: multiplier exp(-t k^4)."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    k = grid.wavenumbers()
    return grid.apply_multiplier(values, np.exp(-t * k**4), axis=axis)


def mollify(values, eps, grid, transform=None, axis=0):
    """Smooth by a unit-mass even profile: mode k picks up transform(eps k).

    The default profile is the standard Gaussian, whose transform is
    exp(-(eps k)^2 / 2); transform(0) = 1 keeps constants (and the mean)
    exactly.
    """
    if eps < 0:
        raise ValueError("mollification width must be nonnegative")
    transform = transform or _GAUSS_TRANSFORM
    return grid.apply_multiplier(values, transform(eps * grid.wavenumbers()),
                                 axis=axis)


def mollify_modes(coefs, eps, transform=None):
    """Same smoothing acting on half-spectrum coefficients directly."""
    if eps < 0:
        raise ValueError("mollification width must be nonnegative")
    transform = transform or _GAUSS_TRANSFORM
    coefs = np.asarray(coefs, dtype=complex)
    k = np.arange(coefs.shape[-1])
    return coefs * transform(eps * k)


def semigroup_difference_norm(values, t, eps, alpha, grid, damping=1.0):
    """Discrete C^alpha norm of (S_t - S^eps_t) u.

    The difference multiplier is exp(-t(c + k^2)) (1 - exp(-t eps^2 k^4)),
    applied in one pass so that eps = 0 returns exactly zero.
    """
    k = grid.wavenumbers()
    mult = np.exp(-t * (damping + k**2)) * -np.expm1(-t * eps**2 * k**4)
    diff = grid.apply_multiplier(values, mult)
    return holder_norm(diff, grid.spacing, alpha)


# ---------------------------------------------------------------------------
# heat kernel (c = 0) in physical space

def _image_radius(t):
    return int(np.ceil(6.0 * np.sqrt(t) / TWO_PI)) + 2


def _wrap(x):
    return np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi


def _spectral_cutoff(t):
    # exp(-K^2 t) below double precision
    return int(np.ceil(np.sqrt(50.0 / t))) + 1


def heat_kernel(x, t, mode="image"):
    """Periodic heat kernel p_t(x), unit mass on the circle.

    mode "image" wraps whole-line Gaussians within the truncation radius
    (tails < 1e-12); mode "spectral" sums the cosine series.  The two agree
    pointwise to ~1e-12 for t >= 1e-3 and are kept as independent routes.
    """
    if t <= 0:
        raise ValueError("kernel time must be positive")
    x = _wrap(x)
    if mode == "image":
        out = np.zeros_like(x)
        for n in range(-_image_radius(t), _image_radius(t) + 1):
            z = x + TWO_PI * n
            out += np.exp(-z * z / (4.0 * t))
        return out / np.sqrt(4.0 * np.pi * t)
    if mode == "spectral":
        k = np.arange(1, _spectral_cutoff(t) + 1)
        series = 2.0 * np.exp(-k**2 * t) * np.cos(np.multiply.outer(x, k))
        return (1.0 + series.sum(axis=-1)) / TWO_PI
    raise ValueError(f"unknown kernel mode {mode!r}")


def heat_kernel_derivative(x, t, mode="image"):
    """Space derivative of the periodic heat kernel."""
    if t <= 0:
        raise ValueError("kernel time must be positive")
    x = _wrap(x)
    if mode == "image":
        out = np.zeros_like(x)
        for n in range(-_image_radius(t), _image_radius(t) + 1):
            z = x + TWO_PI * n
            out += -z / (2.0 * t) * np.exp(-z * z / (4.0 * t))
        return out / np.sqrt(4.0 * np.pi * t)
    if mode == "spectral":
        k = np.arange(1, _spectral_cutoff(t) + 1)
        series = -2.0 * k * np.exp(-k**2 * t) * np.sin(np.multiply.outer(x, k))
        return series.sum(axis=-1) / TWO_PI
    raise ValueError(f"unknown kernel mode {mode!r}")


def kernel_derivative_profile(xi, t, mode="image"):
    """Scaled profile f_t with dx p_t(x) = f_t(x / sqrt(t)) / t.

    The collapse onto a t-independent shape (up to wrapped tails) is what
    makes the kernel-derivative convolution estimates uniform in t.
    """
    return t * heat_kernel_derivative(np.asarray(xi) * np.sqrt(t), t, mode=mode)


def profile_w11_norm(t, n=8192):
    """Discrete W^{1,1} norm of the scaled profile over its physical range."""
    xi_max = np.pi / np.sqrt(t)
    xi = np.linspace(-xi_max, xi_max, n)
    f = kernel_derivative_profile(xi, t)
    df = np.gradient(f, xi)
    return np.trapezoid(np.abs(f) + np.abs(df), xi)


# ---------------------------------------------------------------------------
# quartic kernel of the pure-hyperviscous factor

def quartic_kernel(x):
    """Whole-line kernel of exp(-k^4): (1/pi) int_0^inf exp(-k^4) cos(kx) dk.

    Adaptive quadrature on [0, 6] (the integrand is below 1e-300 beyond);
    even in x by construction.
    """

    def one(xx):
        val, _ = quad(lambda k: np.exp(-k**4) * np.cos(k * xx), 0.0, 6.0,
                      limit=400, epsabs=1e-13, epsrel=1e-12)
        return val / np.pi

    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return one(float(x))
    return np.array([one(v) for v in x.ravel()]).reshape(x.shape)


def quartic_kernel_circle(x, t, images=3):
    """Periodized kernel of exp(-t k^4) by wrapping the scaled line kernel."""
    if t <= 0:
        raise ValueError("kernel time must be positive")
    s = t ** 0.25
    x = _wrap(x)
    out = np.zeros_like(x)
    for n in range(-images, images + 1):
        out += quartic_kernel((x + TWO_PI * n) / s)
    return out / s


def circular_convolve(kernel_nodes, values, grid):
    """h * sum_j K(x_i - y_j) u(y_j) for node-sampled kernel and values."""
    ku = np.fft.rfft(grid.strip_nodes(np.asarray(kernel_nodes, dtype=float)))
    uu = np.fft.rfft(grid.strip_nodes(np.asarray(values, dtype=float)))
    out = np.fft.irfft(ku * uu, n=grid.m) * grid.spacing
    return grid.close_nodes(out)


# ---------------------------------------------------------------------------
# kernel difference in Hoelder scale

def kernel_difference_holder(t, eps, alpha, kappa, num_points=4096):
    """Measured Hoelder-2alpha seminorm of p_t - p^eps_t on a fine grid.

    The difference kernel has modes exp(-k^2 t)(1 - exp(-eps^2 k^4 t)); the
    seminorm is taken over dyadic separations of a uniform grid.  Exponent
    pairs must satisfy 2 alpha + kappa <= 1.
    """
    if t <= 0:
        raise ValueError("kernel time must be positive")
    if eps < 0:
        raise ValueError("hyperviscosity strength must be nonnegative")
    if not (0 < alpha and 0 < kappa):
        raise ValueError("exponents must be positive")
    if 2 * alpha + kappa > 1 + 1e-12:
        raise ValueError("need 2*alpha + kappa <= 1")
    if eps == 0.0:
        return 0.0
    x = np.linspace(0.0, TWO_PI, num_points + 1)
    k = np.arange(1, _spectral_cutoff(t) + 1)
    d = np.exp(-k**2 * t) * -np.expm1(-eps**2 * k**4 * t)
    diff = (2.0 * d * np.cos(np.multiply.outer(x, k))).sum(axis=-1) / TWO_PI
    return holder_seminorm(diff, TWO_PI / num_points, 2 * alpha)
