"""Discrete Hoelder-type norms on node arrays.

All functions take node-first arrays (length N = M+1 with the periodic
duplicate included) and measure increments over gaps g = 1, 2, 4, ... nodes.
Restricting to dyadic gaps keeps every seminorm O(M log M) while changing the
value by at most a fixed constant; pass exact=True where the O(M^2) sup is
wanted.  Tensor components are measured in the max-abs norm.
"""

import numpy as np


def sup_norm(values):
    values = np.asarray(values)
    return float(np.max(np.abs(values))) if values.size else 0.0


def dyadic_gaps(max_gap, exact=False):
    if exact:
        return np.arange(1, max_gap + 1)
    gaps = []
    g = 1
    while g <= max_gap:
        gaps.append(g)
        g *= 2
    if gaps[-1] != max_gap:
        gaps.append(max_gap)
    return np.array(gaps)


def _flat_abs_max(arr):
    """Max abs over all axes except the first; returns a 1-d array."""
    if arr.ndim == 1:
        return np.abs(arr)
    return np.abs(arr).reshape(arr.shape[0], -1).max(axis=1)


def holder_seminorm(values, spacing, alpha, exact=False):
    """sup_{s<t} |Y_t - Y_s| / |t-s|^alpha over node pairs."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    best = 0.0
    for g in dyadic_gaps(n - 1, exact):
        inc = _flat_abs_max(values[g:] - values[:-g])
        best = max(best, float(inc.max()) / (g * spacing) ** alpha)
    return best


def holder_norm(values, spacing, alpha, exact=False):
    return sup_norm(values) + holder_seminorm(values, spacing, alpha, exact)


def remainder_seminorm(y, yprime, x, spacing, beta, exact=False):
    """sup |delta Y_{s,t} - Y'_s delta X_{s,t}| / |t-s|^beta.

    y: (N, ...), yprime: (N, ..., d), x: (N, d).  The remainder of the
    controlled decomposition; beta is typically 2*alpha.
    """
    y = np.asarray(y, dtype=float)
    yprime = np.asarray(yprime, dtype=float)
    x = np.asarray(x, dtype=float)
    n = y.shape[0]
    best = 0.0
    for g in dyadic_gaps(n - 1, exact):
        dy = y[g:] - y[:-g]
        dx = x[g:] - x[:-g]
        gibbs = np.einsum("i...d,id->i...", yprime[:-g], dx)
        rem = _flat_abs_max(dy - gibbs)
        best = max(best, float(rem.max()) / (g * spacing) ** beta)
    return best


def area_seminorm(cell_areas, x, spacing, expo):
    """sup |A_{s,t}| / |t-s|^expo from per-cell areas, by interval doubling.

    cell_areas: (M, d, d) areas over single cells; x: (M+1, d) node values.
    Areas over 2g-node gaps are assembled with Chen's relation
    A_{s,u} = A_{s,t} + A_{t,u} + dX_{s,t} (x) dX_{t,u}, doubling g each level,
    so only dyadic gaps are visited.
    """
    areas = np.asarray(cell_areas, dtype=float)
    x = np.asarray(x, dtype=float)
    m = areas.shape[0]
    dx = x[1:] - x[:-1]
    g = 1
    best = float(_flat_abs_max(areas).max()) / spacing**expo
    while 2 * g <= m:
        cross = np.einsum("ia,ib->iab", dx[:-g], dx[g:])
        areas = areas[:-g] + areas[g:] + cross
        dx = dx[:-g] + dx[g:]
        g *= 2
        best = max(best, float(_flat_abs_max(areas).max()) / (g * spacing) ** expo)
    return best
