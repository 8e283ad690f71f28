"""Gain term through the relativistic Carleman representation.

For a target momentum ``p`` the gain term is rewritten as an integral over
the outgoing momentum ``p'`` and, for each ``p'``, over the hypersurface

    {q' : (p' - p)^mu (q' - p)_mu = 0}

of admissible partners:

    Q+(p) = (2 / p0) int dp'/p'0 f(p') int dq'/q'0 s sigma
            delta((p' - p)^mu (q' - p)_mu) u(p'0 + q'0 - p0) f(q').

The prefactor ``2 / p0`` is the one consistent with the
center-of-momentum form used in :mod:`relbolt.collision`; ``PAPER_PREFACTOR``
holds the ``1 / (4 p0)`` normalization of the published statement for
comparison.

``a = p' - p`` is space-like for ``p' != p``.  A pure boost along ``a`` makes
it purely spatial, ``A = (0, |A| n)``, and the constraint becomes the flat
plane ``Q'_n = P_n`` in the boosted frame, where the invariant measure
``dq'/q'0`` reduces to ``d^2 Q_perp / (|A| Q'0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numba import prange

from .collision import ScatterKernel
from .grid import PAD, GridFunction, _interpolate_many, interpolate, interpolation_order
from .quadrature import SphereQuadrature
from .kinematics import lift, minkowski_dot, pure_boost

#: Prefactor (times ``1 / p0``) consistent with the center-of-momentum gain term.
PREFACTOR = 2.0
#: Prefactor (times ``1 / p0``) as printed in the published representation.
PAPER_PREFACTOR = 0.25


def step_u(x):
    """Heaviside step: 1 for ``x > 0`` and 0 otherwise."""
    return np.where(np.asarray(x) > 0, 1.0, 0.0) if np.ndim(x) else float(x > 0)


def _perp_basis(n):
    """Two unit vectors completing the unit vector ``n`` to an orthonormal frame."""
    trial = np.zeros(3)
    trial[np.argmin(np.abs(n))] = 1.0
    e1 = trial - (trial @ n) * n
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


@dataclass(frozen=True, eq=False)
class HypersurfaceChart:
    """Flat chart of ``{q' : a^mu (q' - p)_mu = 0}`` with ``a = p' - p``.

    ``boost`` maps ``a`` to ``(0, A)``; in the boosted spatial coordinates the
    constraint is the plane ``A . Q' = plane_offset``, spanned by
    ``plane_basis`` through the point ``plane_offset / |A|^2 * A``.
    """

    a: np.ndarray
    boost: np.ndarray
    plane_offset: float
    plane_basis: np.ndarray
    p: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.boost @ self.a

    def lab_point(self, u, v) -> np.ndarray:
        """Mass-shell lab 4-vector of the plane point ``(u, v)`` in ``plane_basis`` coordinates."""
        A = self.A[1:]
        normal = A / np.linalg.norm(A)
        height = self.plane_offset / np.linalg.norm(A)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        spatial = (
            u[..., None] * self.plane_basis[0]
            + v[..., None] * self.plane_basis[1]
            + height * normal
        )
        boosted = lift(spatial)
        inv = np.linalg.inv(self.boost)
        return np.einsum("ij,...j->...i", inv, boosted)

    def constraint(self, q_post) -> np.ndarray:
        """``a^mu (q'_mu - p_mu)`` at lab 4-vectors ``q_post``."""
        return minkowski_dot(self.a, np.asarray(q_post) - self.p)


def chart_for(p, p_post, min_separation: float = 1e-9) -> HypersurfaceChart:
    """Chart of the Carleman hypersurface for the pair ``(p, p')``.

    ``p`` and ``p_post`` are momentum 3-vectors or mass-shell 4-vectors.
    Raises ``ValueError`` when ``|p' - p| < min_separation`` (the excluded
    node, where the surface degenerates).
    """
    p4 = _four(p)
    pp4 = _four(p_post)
    spatial = pp4[1:] - p4[1:]
    dist = np.linalg.norm(spatial)
    if dist < min_separation:
        raise ValueError(f"|p' - p| = {dist:.3e} is below the separation threshold {min_separation:.1e}")
    # p'0 - p0 free of cancellation
    a0 = spatial @ (pp4[1:] + p4[1:]) / (pp4[0] + p4[0])
    a = np.concatenate([[a0], spatial])
    norm2 = minkowski_dot(a, a)
    if not norm2 > 0:
        raise ValueError("p' - p is not space-like")
    n = spatial / dist
    boost = pure_boost(n * (a0 / dist))
    A = boost @ a
    A[0] = 0.0
    # a.(q' - p) = 0  <=>  A.Q' = A.P with A purely spatial
    P = boost @ p4
    offset = float(A[1:] @ P[1:])
    e1, e2 = _perp_basis(A[1:] / np.linalg.norm(A[1:]))
    return HypersurfaceChart(a=a, boost=boost, plane_offset=offset, plane_basis=np.stack([e1, e2]), p=p4)


def _four(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return lift(p) if p.shape == (3,) else p


def disk_rule(radius: float, spacing: float) -> np.ndarray:
    """Midpoint rule on the disk ``|x| <= radius``: rows ``(u, v, weight)``."""
    k = int(math.ceil(radius / spacing))
    c = (np.arange(-k, k) + 0.5) * spacing
    u, v = np.meshgrid(c, c, indexing="ij")
    keep = u**2 + v**2 <= radius**2
    return np.ascontiguousarray(
        np.stack([u[keep], v[keep], np.full(keep.sum(), spacing * spacing)], axis=-1)
    )


@numba.njit(cache=True)
def _perp_pair(nx, ny, nz):
    ax = abs(nx)
    ay = abs(ny)
    az = abs(nz)
    if ax <= ay and ax <= az:
        tx, ty, tz = 1.0, 0.0, 0.0
    elif ay <= az:
        tx, ty, tz = 0.0, 1.0, 0.0
    else:
        tx, ty, tz = 0.0, 0.0, 1.0
    d = tx * nx + ty * ny + tz * nz
    e1x = tx - d * nx
    e1y = ty - d * ny
    e1z = tz - d * nz
    r = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
    e1x /= r
    e1y /= r
    e1z /= r
    return e1x, e1y, e1z, ny * e1z - nz * e1y, nz * e1x - nx * e1z, nx * e1y - ny * e1x


@numba.njit(cache=True)
def _plane_integral(pad, p_max, order, px, py, pz, p0, rx, ry, rz, c_sigma, disk, rim):
    """Plane integral for the pair (p, p') divided by |A|: (total, outer-ring part).

    Returns zeros when ``p' = p`` (degenerate surface).
    """
    r0 = math.sqrt(1.0 + rx * rx + ry * ry + rz * rz)
    ax = rx - px
    ay = ry - py
    az = rz - pz
    an = math.sqrt(ax * ax + ay * ay + az * az)
    if an == 0.0:
        return 0.0, 0.0
    a0 = (ax * (rx + px) + ay * (ry + py) + az * (rz + pz)) / (r0 + p0)
    big_a = math.sqrt((an - a0) * (an + a0))
    if big_a == 0.0:
        return 0.0, 0.0
    beta = a0 / an
    gam = an / big_a
    nx = ax / an
    ny = ay / an
    nz = az / an
    e1x, e1y, e1z, e2x, e2y, e2z = _perp_pair(nx, ny, nz)
    pn = gam * (px * nx + py * ny + pz * nz - beta * p0)
    inner = 0.0
    inner_rim = 0.0
    for k in range(disk.shape[0]):
        u = disk[k, 0]
        v = disk[k, 1]
        big_q0 = math.sqrt(1.0 + u * u + v * v + pn * pn)
        qn = gam * (pn + beta * big_q0)
        qx = u * e1x + v * e2x + qn * nx
        qy = u * e1y + v * e2y + qn * ny
        qz = u * e1z + v * e2z + qn * nz
        q0 = math.sqrt(1.0 + qx * qx + qy * qy + qz * qz)
        if r0 + q0 - p0 <= 0.0:
            continue
        fq = interpolate(pad, p_max, order, qx, qy, qz)
        if fq == 0.0:
            continue
        dx = rx - qx
        dy = ry - qy
        dz = rz - qz
        d0 = (dx * (rx + qx) + dy * (ry + qy) + dz * (rz + qz)) / (r0 + q0)
        g2 = dx * dx + dy * dy + dz * dz - d0 * d0
        if g2 < 0.0:
            g2 = 0.0
        term = disk[k, 2] * (g2 + 4.0) * c_sigma * math.sqrt(g2) * fq / big_q0
        inner += term
        if u * u + v * v > rim * rim:
            inner_rim += term
    return inner / big_a, inner_rim / big_a


@numba.njit(cache=True)
def _cell_of(x, p_max, h, n):
    return int(math.floor((x + p_max) / h))


@numba.njit(cache=True, parallel=True)
def _carleman_sums(pad, p_max, order, targets, c_sigma, disk, rim, dirs, dir_w, rad_t, rad_w, sub):
    """Per target: (Q+ without the prefactor / p0, outer-ring part).

    The ``dp'`` integral is the node midpoint sum except on the 3 x 3 x 3 block
    of cells around ``p``: neighbours are sub-sampled ``sub^3`` times with
    interpolated ``f``, and the cell holding ``p`` is integrated in polar
    coordinates about ``p`` (``dirs``/``dir_w`` on the sphere, ``rad_t``/``rad_w``
    on [0, 1] in the radius), where ``r^2 dr`` cancels the ``1/|A| ~ 1/r``
    singularity.
    """
    n = pad.shape[0] - 2 * PAD
    h = 2.0 * p_max / n
    vol = h * h * h
    m_out = targets.shape[0]
    out = np.zeros((m_out, 2))
    for m in prange(m_out):
        px = targets[m, 0]
        py = targets[m, 1]
        pz = targets[m, 2]
        p0 = math.sqrt(1.0 + px * px + py * py + pz * pz)
        ci = _cell_of(px, p_max, h, n)
        cj = _cell_of(py, p_max, h, n)
        ck = _cell_of(pz, p_max, h, n)
        total = 0.0
        outer = 0.0
        for i in range(n):
            rx = -p_max + (i + 0.5) * h
            for j in range(n):
                ry = -p_max + (j + 0.5) * h
                for l in range(n):
                    near = abs(i - ci) <= 1 and abs(j - cj) <= 1 and abs(l - ck) <= 1
                    if near:
                        continue
                    fpp = pad[i + PAD, j + PAD, l + PAD]
                    if fpp == 0.0:
                        continue
                    rz = -p_max + (l + 0.5) * h
                    r0 = math.sqrt(1.0 + rx * rx + ry * ry + rz * rz)
                    t, o = _plane_integral(pad, p_max, order, px, py, pz, p0, rx, ry, rz, c_sigma, disk, rim)
                    total += vol * fpp / r0 * t
                    outer += vol * fpp / r0 * o
        # neighbouring cells: sub^3 midpoint points with interpolated f
        sv = vol / (sub * sub * sub)
        for i in range(ci - 1, ci + 2):
            for j in range(cj - 1, cj + 2):
                for l in range(ck - 1, ck + 2):
                    if i == ci and j == cj and l == ck:
                        continue
                    if i < 0 or j < 0 or l < 0 or i >= n or j >= n or l >= n:
                        continue
                    for a in range(sub):
                        rx = -p_max + (i + (a + 0.5) / sub) * h
                        for b in range(sub):
                            ry = -p_max + (j + (b + 0.5) / sub) * h
                            for c in range(sub):
                                rz = -p_max + (l + (c + 0.5) / sub) * h
                                fpp = interpolate(pad, p_max, order, rx, ry, rz)
                                if fpp == 0.0:
                                    continue
                                r0 = math.sqrt(1.0 + rx * rx + ry * ry + rz * rz)
                                t, o = _plane_integral(
                                    pad, p_max, order, px, py, pz, p0, rx, ry, rz, c_sigma, disk, rim
                                )
                                total += sv * fpp / r0 * t
                                outer += sv * fpp / r0 * o
        # the cell holding p, in polar coordinates about p
        if 0 <= ci < n and 0 <= cj < n and 0 <= ck < n:
            lo_x = -p_max + ci * h
            lo_y = -p_max + cj * h
            lo_z = -p_max + ck * h
            for d in range(dirs.shape[0]):
                ox = dirs[d, 0]
                oy = dirs[d, 1]
                oz = dirs[d, 2]
                reach = 1e300
                if ox > 0.0:
                    reach = min(reach, (lo_x + h - px) / ox)
                elif ox < 0.0:
                    reach = min(reach, (lo_x - px) / ox)
                if oy > 0.0:
                    reach = min(reach, (lo_y + h - py) / oy)
                elif oy < 0.0:
                    reach = min(reach, (lo_y - py) / oy)
                if oz > 0.0:
                    reach = min(reach, (lo_z + h - pz) / oz)
                elif oz < 0.0:
                    reach = min(reach, (lo_z - pz) / oz)
                for e in range(rad_t.shape[0]):
                    r = reach * rad_t[e]
                    rx = px + r * ox
                    ry = py + r * oy
                    rz = pz + r * oz
                    fpp = interpolate(pad, p_max, order, rx, ry, rz)
                    if fpp == 0.0:
                        continue
                    r0 = math.sqrt(1.0 + rx * rx + ry * ry + rz * rz)
                    t, o = _plane_integral(pad, p_max, order, px, py, pz, p0, rx, ry, rz, c_sigma, disk, rim)
                    wgt = dir_w[d] * rad_w[e] * reach * r * r
                    total += wgt * fpp / r0 * t
                    outer += wgt * fpp / r0 * o
        out[m, 0] = total
        out[m, 1] = outer
    return out


@dataclass(frozen=True)
class CarlemanResult:
    """Carleman gain values with the plane-truncation diagnostic."""

    gain: np.ndarray
    rim_fraction: np.ndarray

    @property
    def truncation_warning(self) -> bool:
        """True when more than 1% of a plane integral sits in the outermost ring."""
        return bool(np.any(self.rim_fraction > 0.01))


def carleman_terms(
    f: GridFunction,
    p,
    kernel: ScatterKernel | None = None,
    spacing: float | None = None,
    radius: float | None = None,
    interpolation: str = "cubic",
    prefactor: float = PREFACTOR,
    sub: int = 3,
) -> CarlemanResult:
    """Carleman gain at momenta ``p`` (shape ``(..., 3)``).

    The outer ``dp'`` integral is the grid midpoint sum away from ``p``; the
    27 cells around ``p`` are refined (``sub^3`` points in each neighbour,
    polar coordinates in the cell holding ``p``).  The inner plane integral
    is a midpoint rule of the given ``spacing`` (default: grid spacing) on a
    disk of ``radius`` (default: ``sqrt(3) p_max`` plus one cell, which covers
    the whole box since the boost leaves plane coordinates unchanged).  A
    nonzero share of the integral in the outermost ring means the disk
    clips the support.
    """
    kernel = kernel or ScatterKernel()
    grid = f.grid
    spacing = grid.spacing if spacing is None else float(spacing)
    radius = math.sqrt(3.0) * grid.p_max + grid.spacing if radius is None else float(radius)
    if spacing <= 0 or radius <= 0:
        raise ValueError("plane spacing and radius must be positive")
    pts = np.asarray(p, dtype=float)
    shape = pts.shape[:-1]
    pts = np.ascontiguousarray(pts.reshape(-1, 3))
    disk = disk_rule(radius, spacing)
    sphere = SphereQuadrature(8, 8)
    rad_t, rad_w = np.polynomial.legendre.leggauss(4)
    out = _carleman_sums(
        f.padded,
        grid.p_max,
        interpolation_order(interpolation),
        pts,
        float(kernel.c_sigma),
        disk,
        radius - spacing,
        sphere.nodes,
        sphere.weights,
        0.5 * (rad_t + 1.0),
        0.5 * rad_w,
        int(sub),
    )
    p0 = np.sqrt(1.0 + np.sum(pts * pts, axis=-1))
    gain = prefactor / p0 * out[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        rim = np.where(out[:, 0] > 0, out[:, 1] / out[:, 0], 0.0)
    return CarlemanResult(gain=gain.reshape(shape), rim_fraction=rim.reshape(shape))


def q_gain_carleman(f: GridFunction, p, kernel: ScatterKernel | None = None, spacing: float | None = None, **kw):
    """Gain term ``Q+(f, f)(p)`` from the Carleman representation."""
    res = carleman_terms(f, p, kernel, spacing, **kw)
    return float(res.gain) if res.gain.ndim == 0 else res.gain


#: Samples per independent random stream in the Monte-Carlo estimator.
CHUNK = 8192

#: Default mollification width in units of the grid spacing.
EPS_CELLS = 0.25


def _sample_cells(rng, cdf, nodes, spacing, m):
    """Cell-uniform points in cells chosen with probability ``cdf`` increments."""
    idx = np.minimum(np.searchsorted(cdf, rng.random(m), side="right"), cdf.size - 1)
    return idx, nodes[idx] + (rng.random((m, 3)) - 0.5) * spacing


def q_gain_mollified(
    f: GridFunction,
    p,
    kernel: ScatterKernel | None = None,
    eps: float | None = None,
    n_samples: int = 100_000,
    seed: int = 0,
    interpolation: str = "cubic",
) -> tuple[float, float]:
    """Monte-Carlo estimate of the pre-layer Carleman integral with a Gaussian delta.

    ``delta(phi)`` is replaced by a normal density of width ``eps`` (default
    ``EPS_CELLS`` grid spacings).  ``p'`` and ``q'`` are each drawn by picking
    a cell with probability proportional to its node value and a uniform
    point inside it, reweighted by the interpolated ``f``; the mollified
    integrand has no singularity at ``p' = p``, so nothing is excluded.
    Samples come in chunks of ``CHUNK``, each with its own stream spawned
    from ``seed``, so the result does not depend on how chunks are
    scheduled.

    Returns ``(estimate, standard_error)``.
    """
    kernel = kernel or ScatterKernel()
    grid = f.grid
    eps = EPS_CELLS * grid.spacing if eps is None else float(eps)
    if not eps > 0:
        raise ValueError("mollification width must be positive")
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if f.is_zero:
        return 0.0, 0.0
    p = np.asarray(p, dtype=float)
    p0 = math.sqrt(1.0 + p @ p)
    nodes = grid.flat_nodes()
    vals = f.values.reshape(-1)
    mass = vals.sum() * grid.cell_volume
    cdf = np.cumsum(vals) / vals.sum()
    order = interpolation_order(interpolation)
    pad = f.padded

    n_chunks = -(-n_samples // CHUNK)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    total = 0.0
    total_sq = 0.0
    for c, ss in enumerate(streams):
        m = min(CHUNK, n_samples - c * CHUNK)
        rng = np.random.default_rng(ss)
        ip, pp = _sample_cells(rng, cdf, nodes, grid.spacing, m)
        iq, qq = _sample_cells(rng, cdf, nodes, grid.spacing, m)
        fp = np.empty(m)
        fq = np.empty(m)
        _interpolate_many(pad, grid.p_max, order, np.ascontiguousarray(pp), fp)
        _interpolate_many(pad, grid.p_max, order, np.ascontiguousarray(qq), fq)
        weight = fp / vals[ip] * fq / vals[iq]
        pp0 = np.sqrt(1.0 + np.sum(pp * pp, axis=1))
        qq0 = np.sqrt(1.0 + np.sum(qq * qq, axis=1))
        # phi = (p' - p).(q' - p) in the Lorentz product
        phi = -(pp0 - p0) * (qq0 - p0) + np.sum((pp - p) * (qq - p), axis=1)
        d = pp - qq
        d0 = np.sum(d * (pp + qq), axis=1) / (pp0 + qq0)
        g2 = np.maximum(np.sum(d * d, axis=1) - d0 * d0, 0.0)
        sigma = kernel.c_sigma * np.sqrt(g2)
        delta = np.exp(-0.5 * (phi / eps) ** 2) / (math.sqrt(2.0 * math.pi) * eps)
        step = (pp0 + qq0 - p0) > 0
        x = PREFACTOR / p0 * mass * mass * (g2 + 4.0) * sigma * delta * step * weight / (pp0 * qq0)
        total += x.sum()
        total_sq += (x * x).sum()
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    return float(mean), float(math.sqrt(var / n_samples))
