"""Uniform periodic grid on [0, 2*pi].

Node arrays carry M+1 entries with node M duplicating node 0, so that windows
[a, b] with b = 2*pi are expressible.  The node axis is axis 0 by convention
(values[i] lives at x_i); spectral helpers accept an axis argument so batched
solver states can keep nodes elsewhere.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


class Grid:
    """Uniform grid with M cells on the circle of circumference 2*pi."""

    def __init__(self, num_points):
        m = int(num_points)
        if m < 4:
            raise ValueError("grid needs at least 4 cells")
        self.m = m
        self.spacing = TWO_PI / m
        self.nodes = np.arange(m + 1) * (TWO_PI / m)
        self.nodes[-1] = TWO_PI

    def __repr__(self):
        return f"Grid(M={self.m})"

    def __eq__(self, other):
        return isinstance(other, Grid) and other.m == self.m

    def index_of(self, x, tol=1e-9):
        """Node index of a grid-aligned coordinate; raises if x is off-grid."""
        idx = int(round(x / self.spacing))
        if idx < 0 or idx > self.m or abs(x - idx * self.spacing) > tol * max(1.0, abs(x)):
            raise ValueError(f"coordinate {x} is not grid-aligned at M={self.m}")
        return idx

    def nearest_node(self, x):
        """Index of the closest node to x in [0, 2*pi]."""
        idx = int(round(x / self.spacing))
        return min(max(idx, 0), self.m)

    def close_nodes(self, values, axis=0):
        """Append the periodic duplicate along the node axis (M -> M+1)."""
        values = np.asarray(values)
        first = np.take(values, [0], axis=axis)
        return np.concatenate([values, first], axis=axis)

    def strip_nodes(self, values, axis=0):
        """Drop the duplicate endpoint along the node axis (M+1 -> M)."""
        values = np.asarray(values)
        return np.take(values, np.arange(self.m), axis=axis)

    def wavenumbers(self):
        """Wavenumbers matching rfft of length-M real data: 0..M//2."""
        return np.fft.rfftfreq(self.m, d=1.0 / self.m)

    def _broadcast(self, mult, ndim, axis):
        shape = [1] * ndim
        shape[axis] = -1
        return np.asarray(mult).reshape(shape)

    def apply_multiplier(self, values, mult, axis=0):
        """Apply a Fourier multiplier (indexed by rfft wavenumber) to node values."""
        u = self.strip_nodes(values, axis=axis)
        spec = np.fft.rfft(u, axis=axis) * self._broadcast(mult, u.ndim, axis)
        out = np.fft.irfft(spec, n=self.m, axis=axis)
        return self.close_nodes(out, axis=axis)

    def spectral_derivative(self, values, axis=0):
        """d/dx of periodic node values."""
        return self.apply_multiplier(values, 1j * self.wavenumbers(), axis=axis)


def require_periodic(values, tol=1e-9, what="node values"):
    values = np.asarray(values, dtype=float)
    scale = max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
    if np.max(np.abs(values[0] - values[-1])) > tol * scale:
        raise ValueError(f"{what} must be periodic (first node equals last)")
    return values
