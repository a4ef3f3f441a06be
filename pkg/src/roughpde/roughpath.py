"""Discrete rough paths: a level-1 path on a uniform mesh plus per-cell areas.

The second-order data is stored only over single cells; areas over arbitrary
node windows are reconstructed in O(1) from prefix sums using Chen's relation

    A_{a,c} = A_{a,b} + A_{b,c} + dX_{a,b} (x) dX_{b,c},

which the reconstruction satisfies identically (no accumulation of defect,
whatever the cell areas are).
"""

import numpy as np

from .norms import area_seminorm, holder_seminorm


class RoughPath:
    """Level-1 values X at M+1 nodes and level-2 areas over the M cells.

    values: (M+1, d), cell_areas: (M, d, d) with
    cell_areas[c] ~ int_{t_c}^{t_{c+1}} (X_r - X_{t_c}) (x) dX_r.
    """

    def __init__(self, spacing, values, cell_areas):
        values = np.asarray(values, dtype=float)
        cell_areas = np.asarray(cell_areas, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be (M+1, d)")
        m1, d = values.shape
        if cell_areas.shape != (m1 - 1, d, d):
            raise ValueError(f"cell_areas must be ({m1 - 1}, {d}, {d})")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(cell_areas))):
            raise ValueError("rough path data must be finite")
        self.spacing = float(spacing)
        self.values = values
        self.cell_areas = cell_areas
        # prefix sums for O(1) window areas: see area()
        zero = np.zeros((1, d, d))
        self._area_prefix = np.concatenate([zero, np.cumsum(cell_areas, axis=0)])
        cross = np.einsum("ia,ib->iab", values[:-1], np.diff(values, axis=0))
        self._cross_prefix = np.concatenate([zero, np.cumsum(cross, axis=0)])

    @property
    def num_cells(self):
        return self.values.shape[0] - 1

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def length(self):
        return self.num_cells * self.spacing

    def nodes(self):
        return np.arange(self.num_cells + 1) * self.spacing

    def __repr__(self):
        return f"RoughPath(M={self.num_cells}, d={self.dim}, length={self.length:g})"

    def increment(self, a, b):
        """X_b - X_a for node indices (scalars or arrays)."""
        return self.values[b] - self.values[a]

    def area(self, a, b):
        """Area over node window [a, b], any index arrays with a <= b.

        From the prefixes P_i = sum of cell areas and Q_i = sum of
        X_j (x) dX_j below i:  A_{a,b} = (P_b - P_a) + (Q_b - Q_a)
        - X_a (x) (X_b - X_a).
        """
        p = self._area_prefix[b] - self._area_prefix[a]
        q = self._cross_prefix[b] - self._cross_prefix[a]
        xa = self.values[a]
        dx = self.values[b] - self.values[a]
        return p + q - np.einsum("...a,...b->...ab", xa, dx)

    def chen_defect(self):
        """Worst violation of Chen's relation over dyadic split triples."""
        worst = 0.0
        g = 1
        m = self.num_cells
        while 2 * g <= m:
            a = np.arange(0, m - 2 * g + 1)
            b, c = a + g, a + 2 * g
            defect = self.area(a, c) - self.area(a, b) - self.area(b, c) \
                - np.einsum("ia,ib->iab", self.increment(a, b), self.increment(b, c))
            worst = max(worst, float(np.max(np.abs(defect))))
            g *= 2
        return worst

    def holder_bounds(self, alpha, exact=False):
        """(seminorm of X at alpha, seminorm of the area at 2*alpha)."""
        lvl1 = holder_seminorm(self.values, self.spacing, alpha, exact=exact)
        lvl2 = area_seminorm(self.cell_areas, self.values, self.spacing, 2 * alpha)
        return lvl1, lvl2

    def dilate(self, lam):
        """Scaling X -> lam X, area -> lam^2 area."""
        return RoughPath(self.spacing, lam * self.values, lam * lam * self.cell_areas)

    def shift_area(self, f_nodes):
        """Shift the second level by the increments of a 2-tensor path F:
        cell areas become A_c + F_{c+1} - F_c.  Level 1 is untouched, and the
        shifted path still satisfies Chen identically."""
        f_nodes = np.asarray(f_nodes, dtype=float)
        d = self.dim
        if f_nodes.shape != (self.num_cells + 1, d, d):
            raise ValueError("shift path must be (M+1, d, d) node matrices")
        return RoughPath(self.spacing, self.values,
                         self.cell_areas + np.diff(f_nodes, axis=0))

    def coarsen(self, factor):
        """Rough path on every factor-th node; areas recombined via Chen."""
        f = int(factor)
        if f < 1 or self.num_cells % f:
            raise ValueError("factor must divide the cell count")
        idx = np.arange(0, self.num_cells + 1, f)
        areas = self.area(idx[:-1], idx[1:])
        return RoughPath(self.spacing * f, self.values[idx], areas)


def gauss_legendre_cell(order=8):
    """Quadrature nodes (in [0, 1]) and weights for one mesh cell."""
    z, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (z + 1.0), 0.5 * w


def smooth_rough_path(path_fn, deriv_fn, num_cells, length, order=8):
    """Canonical lift of a smooth path t -> R^d on a uniform mesh.

    Areas int (X_r - X_s) (x) X'(r) dr are computed per cell with
    Gauss-Legendre quadrature of the given order, which is exact to roundoff
    for the smooth paths used here.
    """
    def eval_vec(fn, s):
        out = np.asarray(fn(s), dtype=float)
        return out[:, None] if out.ndim == 1 else out

    m = int(num_cells)
    h = float(length) / m
    t = np.arange(m + 1) * h
    values = eval_vec(path_fn, t)
    z, w = gauss_legendre_cell(order)
    tq = t[:-1, None] + h * z[None, :]                      # (m, q)
    xq = eval_vec(path_fn, tq.ravel()).reshape(m, len(z), -1)
    dq = eval_vec(deriv_fn, tq.ravel()).reshape(m, len(z), -1)
    rel = xq - values[:-1, None, :]
    areas = h * np.einsum("q,cqa,cqb->cab", w, rel, dq)
    return RoughPath(h, values, areas)
