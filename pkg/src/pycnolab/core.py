"""Grids, fields and discrete norms shared by every solver in the package.

Space is the torus [0, L) sampled on n_x uniform points, so d/dx is a
Fourier multiplier i*xi with xi = 2*pi*k/L and the discrete H^s norm is
the Parseval sum

    ||f||_{H^s}^2 = sum_k (1 + xi_k^2)^s |fhat_k|^2 * L / n_x^2 ,

which reduces to the left-Riemann L^2 quadrature at s = 0. The vertical
structure lives on a cell decomposition of (-1, 0): cell edges
-1 = e_0 < ... < e_{n_r} = 0, level positions at cell midpoints, weights
w_i = e_{i+1} - e_i. Keeping edges explicit lets a layer interface sit
exactly on an edge, which the embedding identities need.

All fields are immutable once constructed; operations return new arrays.
"""

import numpy as np

DEFAULT_LENGTH = 2.0 * np.pi


class SobolevIndex(float):
    """A validated Sobolev regularity index s >= 0."""

    def __new__(cls, s):
        s = float(s)
        if not np.isfinite(s) or s < 0.0:
            raise ValueError(f"Sobolev index must be finite and >= 0, got {s}")
        return super().__new__(cls, s)


class SpatialGrid:
    """Uniform periodic grid on [0, L) with cached spectral machinery."""

    def __init__(self, n_x, length=DEFAULT_LENGTH):
        n_x = int(n_x)
        length = float(length)
        if n_x < 8 or n_x % 2 != 0:
            raise ValueError(f"n_x must be even and >= 8, got {n_x}")
        if not np.isfinite(length) or length <= 0.0:
            raise ValueError(f"domain length must be positive, got {length}")
        self.n_x = n_x
        self.length = length
        self.dx = length / n_x
        self.x = np.arange(n_x) * self.dx
        self.x.flags.writeable = False
        # angular wavenumbers in FFT order
        k = np.fft.fftfreq(n_x, d=1.0 / n_x)
        self.xi = 2.0 * np.pi * k / length
        self.xi.flags.writeable = False
        # 2/3-rule mask: keep |k| <= n_x/3
        self._dealias_mask = (np.abs(k) <= n_x / 3.0)
        self._dealias_mask.flags.writeable = False

    def __eq__(self, other):
        return (isinstance(other, SpatialGrid)
                and other.n_x == self.n_x and other.length == self.length)

    def __hash__(self):
        return hash((self.n_x, self.length))

    def __repr__(self):
        return f"SpatialGrid(n_x={self.n_x}, length={self.length})"

    def derivative(self, values, order=1):
        """Spectral d^order/dx^order along the last axis of `values`."""
        if order < 1 or order != int(order):
            raise ValueError(f"derivative order must be a positive integer, got {order}")
        fhat = np.fft.fft(values, axis=-1)
        fhat *= (1j * self.xi) ** int(order)
        out = np.fft.ifft(fhat, axis=-1).real
        return out

    def dealias(self, values):
        """Apply the 2/3 rule along the last axis (zero modes |k| > n_x/3)."""
        fhat = np.fft.fft(values, axis=-1)
        fhat *= self._dealias_mask
        return np.fft.ifft(fhat, axis=-1).real

    def sobolev_norm_values(self, values, s):
        """Discrete H^s norm of a bare 1-D sample array (last axis if 2-D...

        kept strict: `values` must be 1-D here; solvers call the batched
        helper below when they need per-level norms.
        """
        s = SobolevIndex(s)
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size != self.n_x:
            raise ValueError("expected a 1-D array matching the grid")
        fhat = np.fft.fft(values)
        weight = (1.0 + self.xi * self.xi) ** float(s)
        total = np.sum(weight * np.abs(fhat) ** 2) * self.length / self.n_x ** 2
        return float(np.sqrt(total))

    def sobolev_norms_rows(self, values, s):
        """H^s norm of every row of a (m, n_x) array at once."""
        s = SobolevIndex(s)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        fhat = np.fft.fft(values, axis=-1)
        weight = (1.0 + self.xi * self.xi) ** float(s)
        totals = np.sum(weight * np.abs(fhat) ** 2, axis=-1) * self.length / self.n_x ** 2
        return np.sqrt(totals)


class LevelGrid:
    """Cell decomposition of the isopycnal interval (-1, 0).

    Parameters
    ----------
    edges : array_like
        Strictly increasing cell edges with edges[0] = -1 and
        edges[-1] = 0. Levels are the cell midpoints; weights are the
        cell widths, summing to 1.
    """

    def __init__(self, edges):
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("edges must be a 1-D array with at least 2 entries")
        if abs(edges[0] + 1.0) > 1e-14 or abs(edges[-1]) > 1e-14:
            raise ValueError("edges must run from -1 to 0")
        if np.any(np.diff(edges) <= 0.0):
            raise ValueError("edges must be strictly increasing")
        self.edges = edges.copy()
        self.edges.flags.writeable = False
        self.n_r = edges.size - 1
        self.r = 0.5 * (edges[:-1] + edges[1:])
        self.r.flags.writeable = False
        self.w = np.diff(edges)
        self.w.flags.writeable = False
        if abs(self.w.sum() - 1.0) > 1e-12:
            raise ValueError("cell weights must sum to 1")

    @classmethod
    def uniform(cls, n_r):
        return cls(np.linspace(-1.0, 0.0, int(n_r) + 1))

    @classmethod
    def with_interface(cls, n_r, interface, cluster=0.0):
        """Grid with a cell edge exactly at `interface`, optionally clustered.

        The n_r cells are split between the two sides proportionally to
        their extents. cluster = 0 gives uniform spacing per side; for
        cluster = beta > 0 the edges follow a sinh stretch that
        concentrates cells at the interface (spacing there smaller by
        roughly beta/sinh(beta)).
        """
        n_r = int(n_r)
        interface = float(interface)
        if not -1.0 < interface < 0.0:
            raise ValueError(f"interface must lie in (-1, 0), got {interface}")
        depth_low = interface + 1.0
        n_low = min(max(int(round(n_r * depth_low)), 1), n_r - 1)
        n_up = n_r - n_low
        beta = float(cluster)

        def side(a, b, n, toward_a):
            # edges from a to b, clustered toward a if toward_a
            t = np.linspace(0.0, 1.0, n + 1)
            if beta > 0.0:
                t = np.sinh(beta * t) / np.sinh(beta)
            if toward_a:
                return a + (b - a) * t
            return b - (b - a) * t[::-1]

        lower = side(interface, -1.0, n_low, True)[::-1]  # -1 .. interface
        upper = side(interface, 0.0, n_up, True)          # interface .. 0
        edges = np.concatenate([lower, upper[1:]])
        edges[0] = -1.0
        edges[-1] = 0.0
        # force the interface edge to the exact requested value
        edges[n_low] = interface
        return cls(edges)

    def interface_edge_index(self, interface, tol=1e-12):
        """Index of the edge matching `interface`, or None."""
        hits = np.nonzero(np.abs(self.edges - interface) <= tol)[0]
        if hits.size == 0:
            return None
        return int(hits[0])

    def __eq__(self, other):
        return (isinstance(other, LevelGrid)
                and other.n_r == self.n_r
                and np.array_equal(other.edges, self.edges))

    def __hash__(self):
        return hash((self.n_r, self.edges.tobytes()))

    def __repr__(self):
        return f"LevelGrid(n_r={self.n_r})"


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")


class Field1D:
    """Real samples of one scalar field on a SpatialGrid."""

    def __init__(self, values, grid):
        values = np.asarray(values, dtype=float).copy()
        if values.ndim != 1 or values.size != grid.n_x:
            raise ValueError(
                f"field has {values.shape} samples, grid expects ({grid.n_x},)")
        _check_finite(values, "Field1D")
        values.flags.writeable = False
        self.values = values
        self.grid = grid

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.n_x), grid)

    @classmethod
    def from_function(cls, grid, fn):
        return cls(np.asarray(fn(grid.x), dtype=float), grid)

    def __repr__(self):
        return f"Field1D(n_x={self.grid.n_x})"


class Field2D:
    """Real samples on SpatialGrid x LevelGrid, stored as (n_r, n_x)."""

    def __init__(self, values, grid, levels):
        values = np.asarray(values, dtype=float).copy()
        if values.shape != (levels.n_r, grid.n_x):
            raise ValueError(
                f"field has shape {values.shape}, expected ({levels.n_r}, {grid.n_x})")
        _check_finite(values, "Field2D")
        values.flags.writeable = False
        self.values = values
        self.grid = grid
        self.levels = levels

    @classmethod
    def zeros(cls, grid, levels):
        return cls(np.zeros((levels.n_r, grid.n_x)), grid, levels)

    def level(self, i):
        return Field1D(self.values[i], self.grid)

    def __repr__(self):
        return f"Field2D(n_r={self.levels.n_r}, n_x={self.grid.n_x})"


def spectral_derivative(f, order=1):
    """Spectral derivative of a Field1D; exact for resolved trig polynomials."""
    return Field1D(f.grid.derivative(f.values, order), f.grid)


def sobolev_norm(f, s):
    """Discrete H^s norm of a Field1D (s = 0 is the L^2 quadrature norm)."""
    return f.grid.sobolev_norm_values(f.values, s)


def mixed_norm(g, s, r_mode="sup"):
    """Mixed-level norm of a Field2D.

    r_mode = "sup" gives max_i ||g(., r_i)||_{H^s}; r_mode = "integral"
    gives the weight-summed version sum_i w_i ||g(., r_i)||_{H^s}.
    """
    norms = g.grid.sobolev_norms_rows(g.values, s)
    if r_mode == "sup":
        return float(np.max(norms))
    if r_mode == "integral":
        return float(np.sum(g.levels.w * norms))
    raise ValueError(f"unknown r_mode {r_mode!r}; use 'sup' or 'integral'")
