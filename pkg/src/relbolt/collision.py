"""Hard-ball collision operator in the center-of-momentum representation.

The gain term at ``p`` is

    Q+(f, f)(p) = int_{R^3 x S^2} v_phi sigma(g) f(p') f(q') domega dq

with the ``dq`` integral a midpoint sum over grid cells, ``domega`` a
:class:`~relbolt.quadrature.SphereQuadrature`, and ``f(p')``, ``f(q')`` from
off-grid interpolation (cubic by default, trilinear on request).  The collision frequency ``L f(p)`` drops the
post-collision factors, and ``Q-(f, f)(p) = f(p) L f(p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numba import prange

from .grid import PAD, GridFunction, interpolate, interpolation_order
from .quadrature import SphereQuadrature

#: Cap on ``|log(f'f'_* / (f f_*))|`` in the entropy-production sum.
LOG_CAP = 700.0


@dataclass(frozen=True)
class ScatterKernel:
    """Hard-ball cross section ``sigma(g, theta) = c_sigma * g``."""

    c_sigma: float = 1.0

    def __post_init__(self):
        if not self.c_sigma > 0:
            raise ValueError("c_sigma must be positive")

    def __call__(self, g, cos_theta=None):
        return self.c_sigma * np.asarray(g, dtype=float)


def post_collision(p, q, omega):
    """Post-collision momenta ``(p', q')`` for scattering direction ``omega``.

    ``p`` and ``q`` are momentum 3-vectors (or energy-momentum 4-vectors, in
    which case 4-vectors are returned).  Broadcasts over leading axes.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    omega = np.asarray(omega, dtype=float)
    four = p.shape[-1] == 4
    if four:
        p, q = p[..., 1:], q[..., 1:]
    if np.any(np.abs(np.linalg.norm(omega, axis=-1) - 1.0) > 1e-12):
        raise ValueError("omega must be a unit vector")
    p0 = np.sqrt(1.0 + np.sum(p * p, axis=-1))
    q0 = np.sqrt(1.0 + np.sum(q * q, axis=-1))
    d = p - q
    d0 = np.sum(d * (p + q), axis=-1) / (p0 + q0)
    g = np.sqrt(np.maximum(np.sum(d * d, axis=-1) - d0 * d0, 0.0))
    total = p + q
    e_tot = p0 + q0
    s = g * g + 4.0
    gamma = e_tot / np.sqrt(s)
    t2 = np.sum(total * total, axis=-1)
    tw = np.sum(total * omega, axis=-1)
    # (gamma - 1)/|p+q|^2 = 1/(sqrt(s) (e_tot + sqrt(s))), finite as p+q -> 0
    coef = tw / (np.sqrt(s) * (e_tot + np.sqrt(s)))
    coef = np.where(t2 < 1e-24, 0.0, coef)
    shift = 0.5 * g[..., None] * (omega + coef[..., None] * total)
    p_post = 0.5 * total + shift
    q_post = 0.5 * total - shift
    if four:
        e_p = 0.5 * e_tot + 0.5 * g / np.sqrt(s) * tw
        e_q = 0.5 * e_tot - 0.5 * g / np.sqrt(s) * tw
        return (
            np.concatenate([e_p[..., None], p_post], axis=-1),
            np.concatenate([e_q[..., None], q_post], axis=-1),
        )
    return p_post, q_post


@numba.njit(cache=True, inline="always")
def _pair_invariants(px, py, pz, p0, qx, qy, qz, q0):
    dx = px - qx
    dy = py - qy
    dz = pz - qz
    tx = px + qx
    ty = py + qy
    tz = pz + qz
    e_tot = p0 + q0
    d0 = (dx * tx + dy * ty + dz * tz) / e_tot
    g2 = dx * dx + dy * dy + dz * dz - d0 * d0
    if g2 < 0.0:
        g2 = 0.0
    return math.sqrt(g2), g2 + 4.0


@numba.njit(cache=True, parallel=True)
def _collision_sums(pad, p_max, order, targets, omegas, weights, c_sigma, entropy, closed):
    """Per target momentum: (gain, frequency, f(target), entropy sum, cap count).

    ``omegas``/``weights`` may be a half rule (antipodal pairs folded), since
    both the gain and entropy integrands are even in omega.  With ``closed``
    set, only collisions whose outgoing pair stays inside the box count, in
    the loss and entropy sums as well as in the gain.
    """
    n = pad.shape[0] - 2 * PAD
    h = 2.0 * p_max / n
    vol = h * h * h
    m_out = targets.shape[0]
    n_om = omegas.shape[0]
    wsum = 0.0
    for k in range(n_om):
        wsum += weights[k]
    out = np.zeros((m_out, 5))
    for m in prange(m_out):
        px = targets[m, 0]
        py = targets[m, 1]
        pz = targets[m, 2]
        p0 = math.sqrt(1.0 + px * px + py * py + pz * pz)
        fp = interpolate(pad, p_max, order, px, py, pz)
        gain = 0.0
        freq = 0.0
        dsum = 0.0
        caps = 0.0
        for i in range(n):
            qx = -p_max + (i + 0.5) * h
            for j in range(n):
                qy = -p_max + (j + 0.5) * h
                for l in range(n):
                    qz = -p_max + (l + 0.5) * h
                    fq = pad[i + PAD, j + PAD, l + PAD]
                    q0 = math.sqrt(1.0 + qx * qx + qy * qy + qz * qz)
                    g, s = _pair_invariants(px, py, pz, p0, qx, qy, qz, q0)
                    if g == 0.0:
                        continue
                    rs = math.sqrt(s)
                    kern = g * rs / (p0 * q0) * c_sigma * g
                    tx = px + qx
                    ty = py + qy
                    tz = pz + qz
                    e_tot = p0 + q0
                    t2 = tx * tx + ty * ty + tz * tz
                    cfac = 0.0
                    if t2 >= 1e-24:
                        cfac = 1.0 / (rs * (e_tot + rs))
                    y = fp * fq
                    acc = 0.0
                    dacc = 0.0
                    allowed = 0.0
                    for k in range(n_om):
                        ox = omegas[k, 0]
                        oy = omegas[k, 1]
                        oz = omegas[k, 2]
                        c = cfac * (tx * ox + ty * oy + tz * oz)
                        sx = 0.5 * g * (ox + c * tx)
                        sy = 0.5 * g * (oy + c * ty)
                        sz = 0.5 * g * (oz + c * tz)
                        ax = 0.5 * tx + sx
                        ay = 0.5 * ty + sy
                        az = 0.5 * tz + sz
                        bx = 0.5 * tx - sx
                        by = 0.5 * ty - sy
                        bz = 0.5 * tz - sz
                        if closed:
                            edge = max(abs(ax), abs(ay), abs(az), abs(bx), abs(by), abs(bz))
                            if edge > p_max:
                                continue
                            allowed += weights[k]
                        a = interpolate(pad, p_max, order, ax, ay, az)
                        if a == 0.0 and not entropy:
                            continue
                        b = interpolate(pad, p_max, order, bx, by, bz)
                        x = a * b
                        acc += weights[k] * x
                        if entropy:
                            if x == 0.0 and y == 0.0:
                                continue
                            if x == 0.0:
                                r = -LOG_CAP
                                caps += 1.0
                            elif y == 0.0:
                                r = LOG_CAP
                                caps += 1.0
                            else:
                                r = math.log(x) - math.log(y)
                                if r > LOG_CAP:
                                    r = LOG_CAP
                                    caps += 1.0
                                elif r < -LOG_CAP:
                                    r = -LOG_CAP
                                    caps += 1.0
                            dacc += weights[k] * (x - y) * r
                    if not closed:
                        allowed = wsum
                    freq += kern * fq * allowed
                    gain += kern * acc
                    dsum += kern * dacc
        out[m, 0] = gain * vol
        out[m, 1] = freq * vol
        out[m, 2] = fp
        out[m, 3] = dsum * vol
        out[m, 4] = caps
    return out


def _momenta(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] == 4:
        p = p[..., 1:]
    if p.shape[-1] != 3:
        raise ValueError(f"expected momenta with last axis 3 or 4, got {p.shape}")
    return p


@dataclass(frozen=True, eq=False)
class CollisionTerms:
    """Collision quantities at a set of momenta (arrays share the target shape)."""

    gain: np.ndarray
    frequency: np.ndarray
    f_at: np.ndarray
    entropy_density: np.ndarray
    cap_count: int

    @property
    def loss(self) -> np.ndarray:
        return self.f_at * self.frequency

    @property
    def total(self) -> np.ndarray:
        return self.gain - self.loss


def collision_terms(
    f: GridFunction,
    targets=None,
    kernel: ScatterKernel | None = None,
    sq: SphereQuadrature | None = None,
    entropy: bool = False,
    interpolation: str = "cubic",
    closure: str = "closed",
) -> CollisionTerms:
    """Evaluate gain, frequency and (optionally) entropy-production density.

    ``targets`` defaults to every grid node (result shaped like the grid).
    Output nodes are independent, so the loop is spread over the numba thread
    pool; each node's sum is sequential, so results do not depend on the
    number of threads.

    ``entropy_density`` at ``p`` is ``int v_phi sigma (x - y) log(x / y) domega dq``
    with ``x = f(p') f(q')`` and ``y = f(p) f(q)``; zero pairs contribute 0
    and the logarithm is capped at ``LOG_CAP`` (caps counted in ``cap_count``).

    ``closure="closed"`` keeps only collisions whose outgoing pair lies in the
    grid box, so a box-truncated Juttner function is an exact equilibrium of
    the continuum operator and the entropy production stays finite.
    ``closure="open"`` counts every partner in the loss term, as in the
    whole-space operator restricted to box-supported ``f``.
    """
    kernel = kernel or ScatterKernel()
    sq = sq or SphereQuadrature()
    order = interpolation_order(interpolation)
    if targets is None:
        pts = f.grid.flat_nodes()
        shape = f.grid.shape
    else:
        pts = _momenta(targets)
        shape = pts.shape[:-1]
        pts = pts.reshape(-1, 3)
    omegas, weights = sq.half()
    out = _collision_sums(
        f.padded,
        f.grid.p_max,
        order,
        np.ascontiguousarray(pts, dtype=float),
        omegas,
        weights,
        float(kernel.c_sigma),
        bool(entropy),
        _closed(closure),
    )
    return CollisionTerms(
        gain=out[:, 0].reshape(shape),
        frequency=out[:, 1].reshape(shape),
        f_at=out[:, 2].reshape(shape),
        entropy_density=out[:, 3].reshape(shape),
        cap_count=int(out[:, 4].sum()),
    )


CLOSURES = ("closed", "open")


def _closed(closure: str) -> bool:
    if closure not in CLOSURES:
        raise ValueError(f"unknown closure {closure!r}; expected one of {CLOSURES}")
    return closure == "closed"


def _scalar_or_array(x: np.ndarray):
    return float(x) if x.ndim == 0 else x


def q_gain(
    f: GridFunction, p, kernel=None, sq=None, interpolation: str = "cubic", closure: str = "closed"
):
    """Gain term ``Q+(f, f)`` at momentum ``p`` (or an array of momenta)."""
    return _scalar_or_array(collision_terms(f, p, kernel, sq, interpolation=interpolation, closure=closure).gain)


def linear_L(
    f: GridFunction, p, kernel=None, sq=None, interpolation: str = "cubic", closure: str = "closed"
):
    """Collision frequency ``L f(p) = int v_phi sigma f(q) domega dq``.

    With the default closed closure the ``domega`` integral only covers
    directions whose outgoing pair stays in the grid box; ``closure="open"``
    gives the full sphere.
    """
    return _scalar_or_array(collision_terms(f, p, kernel, sq, interpolation=interpolation, closure=closure).frequency)


def q_loss(
    f: GridFunction, p, kernel=None, sq=None, interpolation: str = "cubic", closure: str = "closed"
):
    """Loss term ``Q-(f, f)(p) = f(p) L f(p)``."""
    return _scalar_or_array(collision_terms(f, p, kernel, sq, interpolation=interpolation, closure=closure).loss)


def collide_full(
    f: GridFunction, kernel=None, sq=None, interpolation: str = "cubic", closure: str = "closed"
) -> np.ndarray:
    """``Q(f, f)`` at every grid node, as a signed array shaped like the grid."""
    return collision_terms(f, None, kernel, sq, interpolation=interpolation, closure=closure).total


def invariant_sums(f: GridFunction, values: np.ndarray) -> np.ndarray:
    """Grid integrals of ``(1, p1, p2, p3, p0) * values`` (discrete conservation defects)."""
    grid = f.grid
    w = grid.cell_volume
    p = grid.nodes
    return np.array(
        [
            values.sum() * w,
            (p[..., 0] * values).sum() * w,
            (p[..., 1] * values).sum() * w,
            (p[..., 2] * values).sum() * w,
            (grid.energies * values).sum() * w,
        ]
    )
