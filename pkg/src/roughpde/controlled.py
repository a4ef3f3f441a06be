"""Paths controlled by a rough path, and the compensated rough integral.

A controlled path stores node values Y (M+1, m) and a Gubinelli derivative
Y' (M+1, m, d) against a d-dimensional reference path.  The defining
requirement is that the remainder R_{s,t} = dY_{s,t} - Y'_s dX_{s,t} gains a
second Hoelder exponent; remainder_norm measures exactly that.

Rough integrals are left-point sums compensated with the area:

    int Y (x) dX  ~  sum_c  Y_c (x) dX_c + Y'_c . A_c

which is second-order accurate when Y' is the true derivative and falls back
to a plain first-order left sum when Y' = 0.
"""

import numpy as np

from .norms import holder_norm, holder_seminorm, remainder_seminorm, sup_norm
from .roughpath import RoughPath


class ControlledPath:
    def __init__(self, spacing, values, deriv):
        values = np.asarray(values, dtype=float)
        deriv = np.asarray(deriv, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be (M+1, m)")
        if deriv.ndim != 3 or deriv.shape[:2] != values.shape:
            raise ValueError("deriv must be (M+1, m, d)")
        self.spacing = float(spacing)
        self.values = values
        self.deriv = deriv

    @property
    def num_cells(self):
        return self.values.shape[0] - 1

    @property
    def out_dim(self):
        return self.values.shape[1]

    @property
    def ref_dim(self):
        return self.deriv.shape[2]

    def __repr__(self):
        return (f"ControlledPath(M={self.num_cells}, m={self.out_dim}, "
                f"d={self.ref_dim})")

    def _compatible(self, rough):
        if rough.num_cells != self.num_cells or rough.dim != self.ref_dim:
            raise ValueError("controlled path does not match the rough path mesh")


def zero_derivative_lift(spacing, values, ref_dim):
    """Any path is controlled with Y' = 0; integration is then first order."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    deriv = np.zeros(values.shape + (ref_dim,))
    return ControlledPath(spacing, values, deriv)


def canonical_lift(rough):
    """X viewed as controlled by itself, Y' = identity."""
    m1, d = rough.values.shape
    deriv = np.broadcast_to(np.eye(d), (m1, d, d)).copy()
    return ControlledPath(rough.spacing, rough.values.copy(), deriv)


def compose(smap, path, x=None):
    """phi(Y) with the chain-rule derivative Dphi(Y) Y'.

    smap.in_dim must equal the controlled path's output dimension; the map's
    output axes are flattened into a single component axis.
    """
    if smap.in_dim != path.out_dim:
        raise ValueError(f"{smap.name} expects dimension {smap.in_dim}, "
                         f"path has {path.out_dim}")
    if x is None and smap.space_dependent:
        raise ValueError(f"{smap.name} needs node coordinates")
    n1 = path.values.shape[0]
    vals = smap.apply(path.values, x).reshape(n1, -1)
    jac = smap.jacobian(path.values, x).reshape(n1, -1, smap.in_dim)
    deriv = jac @ path.deriv
    return ControlledPath(path.spacing, vals, deriv)


def product(left, right):
    """Pointwise product of two scalar controlled paths (Leibniz derivative)."""
    if left.out_dim != 1 or right.out_dim != 1:
        raise ValueError("product is defined for scalar controlled paths")
    vals = left.values * right.values
    deriv = left.values[..., None] * right.deriv + right.values[..., None] * left.deriv
    return ControlledPath(left.spacing, vals, deriv)


def rough_integral(path, rough, a=0, b=None):
    """Compensated integral int_a^b Y (x) dX over node window [a, b].

    Returns an (m, d) tensor; component [i, k] integrates Y^i against X^k.
    """
    path._compatible(rough)
    if b is None:
        b = rough.num_cells
    if not (0 <= a <= b <= rough.num_cells):
        raise ValueError("window out of range")
    dx = np.diff(rough.values[a:b + 1], axis=0)
    first = np.einsum("ci,ck->ik", path.values[a:b], dx)
    second = np.einsum("cij,cjk->ik", path.deriv[a:b], rough.cell_areas[a:b])
    return first + second


def rough_integral_path(path, rough):
    """Running integral Z_t = int_0^t Y (x) dX as a controlled path.

    Z takes values in R^{m x d} (flattened); its Gubinelli derivative is
    Z'^{(ik),l} = Y^i delta_{kl}.
    """
    path._compatible(rough)
    m, d = path.out_dim, rough.dim
    dx = np.diff(rough.values, axis=0)
    terms = np.einsum("ci,ck->cik", path.values[:-1], dx) \
        + np.einsum("cij,cjk->cik", path.deriv[:-1], rough.cell_areas)
    z = np.concatenate([np.zeros((1, m, d)), np.cumsum(terms, axis=0)])
    zprime = np.einsum("ni,kl->nikl", path.values, np.eye(d))
    n1 = z.shape[0]
    return ControlledPath(path.spacing, z.reshape(n1, m * d),
                          zprime.reshape(n1, m * d, d))


def remainder_norm(path, rough, alpha, exact=False):
    """2*alpha-Hoelder seminorm of R_{s,t} = dY - Y'_s dX."""
    path._compatible(rough)
    return remainder_seminorm(path.values, path.deriv, rough.values,
                              path.spacing, 2 * alpha, exact=exact)


def controlled_norm(path, rough, alpha, exact=False):
    """Norm breakdown of a controlled path.

    Returns (|Y|_{C^alpha}, |Y'|_{C^alpha}, |R|_{2alpha}, total) where the
    first two are full Hoelder norms (sup plus seminorm), the third is the
    remainder seminorm, and total is their sum.
    """
    ny = holder_norm(path.values, path.spacing, alpha, exact=exact)
    nd = holder_norm(path.deriv, path.spacing, alpha, exact=exact)
    nr = remainder_norm(path, rough, alpha, exact=exact)
    return ny, nd, nr, ny + nd + nr
