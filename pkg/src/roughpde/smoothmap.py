"""Smooth coefficient maps with explicit derivatives.

A SmoothMap bundles y -> phi(y, x) with its first (and optionally second)
y-derivative, since rough-path composition and the mild-solution map need
exact Jacobians, not autodiff.  Conventions:

    y        (..., in_dim)
    phi      (..., *out_shape)
    d1       (..., *out_shape, in_dim)
    d2       (..., *out_shape, in_dim, in_dim)

x, when the map is space dependent, broadcasts against the leading axes.
"""

import numpy as np


class SmoothMap:
    def __init__(self, fn, d1, d2=None, in_dim=1, out_shape=(),
                 space_dependent=False, name="map"):
        self.fn = fn
        self.d1 = d1
        self.d2 = d2
        self.in_dim = int(in_dim)
        self.out_shape = tuple(out_shape)
        self.space_dependent = bool(space_dependent)
        self.name = name

    def __repr__(self):
        return f"SmoothMap({self.name}, in_dim={self.in_dim}, out_shape={self.out_shape})"

    def _check(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 0 or y.shape[-1] != self.in_dim:
            raise ValueError(f"{self.name}: expected trailing axis of length {self.in_dim}")
        return y

    def apply(self, y, x=None):
        return np.asarray(self.fn(self._check(y), x), dtype=float)

    def jacobian(self, y, x=None):
        return np.asarray(self.d1(self._check(y), x), dtype=float)

    def hessian(self, y, x=None):
        if self.d2 is None:
            raise ValueError(f"{self.name}: second derivative not provided")
        return np.asarray(self.d2(self._check(y), x), dtype=float)

    @classmethod
    def scalar(cls, f, df, d2f=None, name="scalar"):
        """Map of one real variable, applied componentwise to y[..., 0]."""
        fn = lambda y, x: f(y[..., 0])
        d1 = lambda y, x: df(y[..., 0])[..., None]
        d2 = None
        if d2f is not None:
            d2 = lambda y, x: d2f(y[..., 0])[..., None, None]
        return cls(fn, d1, d2, in_dim=1, out_shape=(), name=name)

    @classmethod
    def scalar_times_space(cls, f, df, weight, d2f=None, name="weighted"):
        """phi(y, x) = weight(x) * f(y), for space-dependent coefficients."""
        fn = lambda y, x: weight(x) * f(y[..., 0])
        d1 = lambda y, x: (weight(x) * df(y[..., 0]))[..., None]
        d2 = None
        if d2f is not None:
            d2 = lambda y, x: (weight(x) * d2f(y[..., 0]))[..., None, None]
        return cls(fn, d1, d2, in_dim=1, out_shape=(), space_dependent=True, name=name)

    @classmethod
    def componentwise(cls, f, df, d2f=None, dim=1, name="componentwise"):
        """phi_i(y) = f(y_i) with diagonal Jacobian, as an R^dim -> R^dim map."""
        idx = np.arange(dim)

        def d1(y, x):
            jac = np.zeros(y.shape + (dim,))
            jac[..., idx, idx] = df(y)
            return jac

        d2 = None
        if d2f is not None:
            def d2(y, x):
                hes = np.zeros(y.shape + (dim, dim))
                hes[..., idx, idx, idx] = d2f(y)
                return hes

        return cls(lambda y, x: f(y), d1, d2, in_dim=dim, out_shape=(dim,),
                   name=name)

    @classmethod
    def scalar_transport(cls, f, df, d2f=None, name="transport"):
        """1x1 matrix field y -> [[f(y)]] for scalar transport coefficients."""
        fn = lambda y, x: f(y[..., 0])[..., None, None]
        d1 = lambda y, x: df(y[..., 0])[..., None, None, None]
        d2 = None
        if d2f is not None:
            d2 = lambda y, x: d2f(y[..., 0])[..., None, None, None, None]
        return cls(fn, d1, d2, in_dim=1, out_shape=(1, 1), name=name)

    @classmethod
    def linear(cls, matrix, name="linear"):
        """phi(y) = matrix @ y with constant Jacobian."""
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        out, n = a.shape
        fn = lambda y, x: np.einsum("oi,...i->...o", a, y)
        d1 = lambda y, x: np.broadcast_to(a, y.shape[:-1] + (out, n)).copy()
        d2 = lambda y, x: np.zeros(y.shape[:-1] + (out, n, n))
        return cls(fn, d1, d2, in_dim=n, out_shape=(out,), name=name)

    @classmethod
    def zero(cls, in_dim=1, out_shape=(), name="zero"):
        fn = lambda y, x: np.zeros(y.shape[:-1] + tuple(out_shape))
        d1 = lambda y, x: np.zeros(y.shape[:-1] + tuple(out_shape) + (in_dim,))
        d2 = lambda y, x: np.zeros(y.shape[:-1] + tuple(out_shape) + (in_dim, in_dim))
        return cls(fn, d1, d2, in_dim=in_dim, out_shape=tuple(out_shape), name=name)


def derivative_defect(smap, y, x=None, step=1e-5):
    """Max abs mismatch between provided derivatives and central differences.

    Checks d1 against finite differences of fn, and d2 (if present) against
    finite differences of d1, over the supplied sample points y (..., in_dim).
    """
    y = np.asarray(y, dtype=float)
    worst = 0.0
    for k in range(smap.in_dim):
        e = np.zeros(smap.in_dim)
        e[k] = step
        fd1 = (smap.apply(y + e, x) - smap.apply(y - e, x)) / (2 * step)
        worst = max(worst, float(np.max(np.abs(fd1 - smap.jacobian(y, x)[..., k]))))
        if smap.d2 is not None:
            fd2 = (smap.jacobian(y + e, x) - smap.jacobian(y - e, x)) / (2 * step)
            worst = max(worst, float(np.max(np.abs(fd2 - smap.hessian(y, x)[..., k]))))
    return worst
