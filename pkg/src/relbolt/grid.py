"""Uniform Cartesian momentum grids and nonnegative grid functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numba
import numpy as np


@dataclass(frozen=True)
class MomentumGrid:
    """Cell-centred grid on the cube ``[-p_max, p_max]^3``.

    Node ``i`` along an axis sits at ``-p_max + (i + 1/2) * spacing``, so the
    node set is symmetric under ``p -> -p``.
    """

    n_per_axis: int = 12
    p_max: float = 6.0

    def __post_init__(self):
        if int(self.n_per_axis) != self.n_per_axis or self.n_per_axis < 1:
            raise ValueError("n_per_axis must be a positive integer")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        object.__setattr__(self, "n_per_axis", int(self.n_per_axis))
        object.__setattr__(self, "p_max", float(self.p_max))

    @property
    def spacing(self) -> float:
        return 2.0 * self.p_max / self.n_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_per_axis,) * 3

    @property
    def size(self) -> int:
        return self.n_per_axis**3

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.p_max + (np.arange(self.n_per_axis) + 0.5) * self.spacing

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node momenta, shape ``(n, n, n, 3)``."""
        x = self.axis
        return np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)

    @cached_property
    def energies(self) -> np.ndarray:
        """``p0 = sqrt(1 + |p|^2)`` at every node, shape ``(n, n, n)``."""
        return np.sqrt(1.0 + np.sum(self.nodes**2, axis=-1))

    def flat_nodes(self) -> np.ndarray:
        return self.nodes.reshape(-1, 3)

    def index_of(self, p) -> tuple[int, int, int]:
        """Index of the cell containing ``p`` (clipped to the grid)."""
        u = np.floor((np.asarray(p, dtype=float) + self.p_max) / self.spacing).astype(int)
        return tuple(np.clip(u, 0, self.n_per_axis - 1))

    def refined(self) -> "MomentumGrid":
        """Same box, half the spacing."""
        return MomentumGrid(2 * self.n_per_axis, self.p_max)

    def wedge_indices(self) -> np.ndarray:
        """Flat indices of nodes with ``px >= py >= pz > 0``.

        Every node is the image of one of these under the 48 cubic symmetries.
        """
        p = self.flat_nodes()
        keep = (p[:, 0] >= p[:, 1]) & (p[:, 1] >= p[:, 2]) & (p[:, 2] > 0)
        return np.flatnonzero(keep)


#: Interpolation orders accepted by :func:`interpolate`.
INTERPOLATIONS = {"linear": 1, "cubic": 3}

#: Ghost layers on each side of a padded value array.
PAD = 2


def padded(values: np.ndarray) -> np.ndarray:
    """Copy of ``values`` with ``PAD`` ghost layers on every side.

    Ghosts continue each axis geometrically with the ratio of the two
    outermost nodes, capped at 1 so they never exceed the edge value; a zero
    at either outermost node gives zero ghosts.  Exponential tails are thus
    extended exactly and positive data stay positive up to the box faces.
    """
    out = np.zeros(tuple(d + 2 * PAD for d in values.shape))
    inner = (slice(PAD, -PAD),) * 3
    out[inner] = values
    for axis in range(3):
        view = np.moveaxis(out, axis, 0)
        for edge, step in ((PAD, -1), (-PAD - 1, 1)):
            e = view[edge]
            i = view[edge - step]
            ratio = np.zeros_like(e)
            pos = (e > 0) & (i > 0)
            ratio[pos] = np.minimum(e[pos] / i[pos], 1.0)
            ghost = e
            for layer in range(1, PAD + 1):
                ghost = ghost * ratio
                view[edge + layer * step] = ghost
    return out


def interpolation_order(name: str) -> int:
    try:
        return INTERPOLATIONS[name]
    except KeyError:
        raise ValueError(f"unknown interpolation {name!r}; expected one of {sorted(INTERPOLATIONS)}") from None


@numba.njit(cache=True, inline="always")
def _cubic_weights(t):
    # Catmull-Rom weights for the nodes at offsets -1, 0, 1, 2
    t2 = t * t
    t3 = t2 * t
    return (
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    )


@numba.njit(cache=True)
def interpolate(pad, p_max, order, x, y, z):
    """Off-grid value from a padded node array, zero outside ``[-p_max, p_max]^3``.

    ``order`` 1 is trilinear; ``order`` 3 is tensor-product Catmull-Rom
    (cubic, C1) bounded below by the smallest of the 8 surrounding nodes, so
    positive data stay positive.  Beyond the
    grid the ghost layers of :func:`padded` supply the stencil.
    """
    if abs(x) > p_max or abs(y) > p_max or abs(z) > p_max:
        return 0.0
    n = pad.shape[0] - 2 * PAD
    h = 2.0 * p_max / n
    u = (x + p_max) / h - 0.5
    v = (y + p_max) / h - 0.5
    w = (z + p_max) / h - 0.5
    # |x| <= p_max keeps u >= -0.5, so int(u + 1) - 1 is floor(u)
    i = int(u + 1.0) - 1
    j = int(v + 1.0) - 1
    k = int(w + 1.0) - 1
    tu = u - i
    tv = v - j
    tw = w - k
    i += PAD
    j += PAD
    k += PAD
    if order == 1:
        c00 = pad[i, j, k] * (1.0 - tu) + pad[i + 1, j, k] * tu
        c10 = pad[i, j + 1, k] * (1.0 - tu) + pad[i + 1, j + 1, k] * tu
        c01 = pad[i, j, k + 1] * (1.0 - tu) + pad[i + 1, j, k + 1] * tu
        c11 = pad[i, j + 1, k + 1] * (1.0 - tu) + pad[i + 1, j + 1, k + 1] * tu
        c0 = c00 * (1.0 - tv) + c10 * tv
        c1 = c01 * (1.0 - tv) + c11 * tv
        return c0 * (1.0 - tw) + c1 * tw
    a = _cubic_weights(tu)
    b = _cubic_weights(tv)
    c = _cubic_weights(tw)
    total = 0.0
    for di in range(4):
        plane = 0.0
        for dj in range(4):
            row = pad[i - 1 + di, j - 1 + dj]
            line = c[0] * row[k - 1] + c[1] * row[k] + c[2] * row[k + 1] + c[3] * row[k + 2]
            plane += b[dj] * line
        total += a[di] * plane
    lo = pad[i, j, k]
    for di in range(2):
        for dj in range(2):
            for dk in range(2):
                lo = min(lo, pad[i + di, j + dj, k + dk])
    return max(total, lo)


@numba.njit(cache=True)
def _interpolate_many(pad, p_max, order, points, out):
    for m in range(points.shape[0]):
        out[m] = interpolate(pad, p_max, order, points[m, 0], points[m, 1], points[m, 2])


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Nonnegative node values on a :class:`MomentumGrid`."""

    grid: MomentumGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        if np.any(v < 0):
            raise ValueError("grid function values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: MomentumGrid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: MomentumGrid, func: Callable[[np.ndarray], np.ndarray]):
        """Sample ``func`` (mapping ``(..., 3)`` momenta to values) at the nodes."""
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))

    def __call__(self, p, interpolation: str = "cubic") -> np.ndarray | float:
        """Evaluate off-grid (``interpolation`` is ``"cubic"`` or ``"linear"``)."""
        p = np.asarray(p, dtype=np.float64)
        pts = np.ascontiguousarray(p.reshape(-1, 3))
        out = np.empty(pts.shape[0])
        _interpolate_many(self.padded, self.grid.p_max, interpolation_order(interpolation), pts, out)
        if p.ndim == 1:
            return float(out[0])
        return out.reshape(p.shape[:-1])

    @cached_property
    def padded(self) -> np.ndarray:
        return padded(self.values)

    def integrate(self, weight=None) -> float:
        """Midpoint-rule integral of ``weight * f`` over the box."""
        v = self.values if weight is None else self.values * weight
        return float(v.sum() * self.grid.cell_volume)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)
