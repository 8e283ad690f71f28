"""Four-vector algebra on the mass shell (c = 1, rest mass = 1).

Four-vectors are plain ``numpy`` arrays whose last axis has length 4, index 0
being the time component.  Every function broadcasts over leading axes so the
same code serves single evaluations and million-sample sweeps.  Lorentz
matrices are ``(..., 4, 4)`` arrays acting as ``v' = L @ v``.
"""

from __future__ import annotations

import numpy as np

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])

#: Radicand slack below which ``g`` is clamped to zero instead of rejected.
G_RADICAND_SLACK = 1e-12


class MassShellError(ValueError):
    """Raised when inputs are inconsistent with the mass shell."""


def _as_float(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def lift(p) -> np.ndarray:
    """Return the energy-momentum vector ``(sqrt(1 + |p|^2), p)``."""
    p = _as_float(p)
    if p.shape[-1:] != (3,):
        raise ValueError(f"expected a 3-vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("momentum must be finite")
    energy = np.sqrt(1.0 + np.einsum("...i,...i->...", p, p))
    return np.concatenate([energy[..., None], p], axis=-1)


def minkowski_dot(a, b) -> np.ndarray:
    """Lorentz inner product ``-a0 b0 + a.b``."""
    a = _as_float(a)
    b = _as_float(b)
    return -a[..., 0] * b[..., 0] + np.einsum("...i,...i->...", a[..., 1:], b[..., 1:])


def s_invariant(p, q) -> np.ndarray:
    """Squared total energy in the center-of-momentum frame, ``2(1 - p.q)``."""
    return 2.0 * (1.0 - minkowski_dot(p, q))


def energy_difference(p, q) -> np.ndarray:
    """``p0 - q0`` for mass-shell vectors, free of cancellation."""
    p = _as_float(p)
    q = _as_float(q)
    ps, qs = p[..., 1:], q[..., 1:]
    return np.einsum("...i,...i->...", ps - qs, ps + qs) / (p[..., 0] + q[..., 0])


def g_relative(p, q) -> np.ndarray:
    """Relative momentum ``sqrt(2(-p.q - 1))``.

    Evaluated as ``sqrt(|p - q|^2 - (p0 - q0)^2)``, which is the same quantity
    on the mass shell without the cancellation of the first form near
    ``p = q``.  A radicand of the first form below ``-G_RADICAND_SLACK`` (scaled
    by ``p0 q0``) means an input is off the mass shell and is rejected.
    """
    p = _as_float(p)
    q = _as_float(q)
    naive = 2.0 * (-minkowski_dot(p, q) - 1.0)
    if np.any(naive < -G_RADICAND_SLACK * np.maximum(1.0, p[..., 0] * q[..., 0])):
        raise MassShellError("negative g radicand: inputs are not on the mass shell")
    d = p[..., 1:] - q[..., 1:]
    d0 = energy_difference(p, q)
    rad = np.einsum("...i,...i->...", d, d) - d0 * d0
    return np.sqrt(np.maximum(rad, 0.0))


def moller_velocity(p, q) -> np.ndarray:
    """Moller velocity ``g sqrt(s) / (p0 q0)``."""
    p = _as_float(p)
    q = _as_float(q)
    return g_relative(p, q) * np.sqrt(s_invariant(p, q)) / (p[..., 0] * q[..., 0])


def moller_velocity_cross(p, q) -> np.ndarray:
    """Three-velocity form ``sqrt(|v-w|^2 - |v x w|^2)``.

    Equals ``g sqrt(s) / (2 p0 q0)``, half of :func:`moller_velocity`.
    """
    p = _as_float(p)
    q = _as_float(q)
    v = p[..., 1:] / p[..., :1]
    w = q[..., 1:] / q[..., :1]
    d = v - w
    c = np.cross(v, w)
    rad = np.einsum("...i,...i->...", d, d) - np.einsum("...i,...i->...", c, c)
    return np.sqrt(np.maximum(rad, 0.0))


def scattering_cosine(p, q, p_post, q_post) -> np.ndarray:
    """Cosine of the scattering angle ``(p - q).(p' - q') / g^2``, clamped to [-1, 1]."""
    p, q, p_post, q_post = map(_as_float, (p, q, p_post, q_post))
    g2 = g_relative(p, q) ** 2
    if np.any(g2 == 0.0):
        raise ValueError("scattering angle undefined for g = 0")
    c = minkowski_dot(p - q, p_post - q_post) / g2
    if np.any(np.abs(c) > 1.0 + 1e-9):
        raise ValueError("post-collision pair violates collision invariance")
    return np.clip(c, -1.0, 1.0)


def inverse(lam) -> np.ndarray:
    """Inverse of a Lorentz matrix, ``eta L^T eta``."""
    lam = _as_float(lam)
    return ETA @ np.swapaxes(lam, -1, -2) @ ETA


def apply(lam, v) -> np.ndarray:
    """Apply a Lorentz matrix to a four-vector."""
    return np.einsum("...ij,...j->...i", _as_float(lam), _as_float(v))


def lorentz_defect(lam) -> np.ndarray:
    """Max-norm of ``L^T eta L - eta`` per matrix."""
    lam = _as_float(lam)
    d = np.swapaxes(lam, -1, -2) @ ETA @ lam - ETA
    return np.abs(d).max(axis=(-1, -2))


def pure_boost(beta) -> np.ndarray:
    """Pure boost into the frame moving with three-velocity ``beta`` (``|beta| < 1``)."""
    beta = _as_float(beta)
    b2 = np.einsum("...i,...i->...", beta, beta)
    if np.any(b2 >= 1.0):
        raise ValueError("boost velocity must satisfy |beta| < 1")
    gamma = 1.0 / np.sqrt(1.0 - b2)
    # (gamma - 1)/b2 written to stay finite as b2 -> 0
    k = gamma * gamma / (gamma + 1.0)
    lam = np.zeros(beta.shape[:-1] + (4, 4))
    lam[..., 0, 0] = gamma
    lam[..., 0, 1:] = -gamma[..., None] * beta
    lam[..., 1:, 0] = -gamma[..., None] * beta
    lam[..., 1:, 1:] = np.eye(3) + k[..., None, None] * beta[..., :, None] * beta[..., None, :]
    return lam


def rest_frame_boost(u) -> np.ndarray:
    """Boost taking the time-like unit vector ``u`` to ``(1, 0, 0, 0)``."""
    u = _as_float(u)
    return pure_boost(u[..., 1:] / u[..., :1])


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _orthogonal_unit(e):
    """Some unit vector orthogonal to each unit 3-vector in ``e``."""
    trial = np.zeros_like(e)
    # pick the lab axis least aligned with e, then Gram-Schmidt
    idx = np.argmin(np.abs(e), axis=-1)
    np.put_along_axis(trial, idx[..., None], 1.0, axis=-1)
    trial = trial - np.einsum("...i,...i->...", trial, e)[..., None] * e
    return _unit(trial)


def _minkowski_complement(r0, r2, r3):
    """Row completing ``(r0, ., r2, r3)`` to a proper Lorentz matrix."""
    # the Hodge dual of r0 ^ r2 ^ r3 is Euclidean-orthogonal to all three;
    # lowering its index with eta makes it Minkowski-orthogonal instead
    m = np.stack([r0, r2, r3], axis=-2)
    w = np.empty(r0.shape)
    for j in range(4):
        cols = [c for c in range(4) if c != j]
        w[..., j] = (-1) ** j * np.linalg.det(m[..., :, cols])
    w = w @ ETA
    w = w / np.sqrt(np.abs(minkowski_dot(w, w)))[..., None]
    lam = np.stack([r0, w, r2, r3], axis=-2)
    sign = np.sign(np.linalg.det(lam))
    return w * sign[..., None]


def com_boost(p, q) -> np.ndarray:
    """Lorentz matrix taking the pair ``(p, q)`` to its center-of-momentum frame.

    Rows are those of the explicit matrix used in the relativistic literature:
    ``L (p + q) = (sqrt(s), 0, 0, 0)`` and ``-L (p - q) = (0, 0, 0, g)``.  For
    (nearly) collinear momenta the rows containing ``1/|p x q|`` are replaced by
    an orthonormal completion; the two identities above are unaffected.
    """
    p = _as_float(p)
    q = _as_float(q)
    p0, q0 = p[..., 0], q[..., 0]
    ps, qs = p[..., 1:], q[..., 1:]
    s = s_invariant(p, q)
    g = g_relative(p, q)
    if np.any(g == 0.0):
        raise ValueError("center-of-momentum boost undefined for g = 0")
    rs = np.sqrt(s)
    d0 = energy_difference(p, q)
    pdq = np.einsum("...i,...i->...", ps, qs)
    pp = np.einsum("...i,...i->...", ps, ps)
    qq = np.einsum("...i,...i->...", qs, qs)

    r0 = np.concatenate([((p0 + q0) / rs)[..., None], -(ps + qs) / rs[..., None]], axis=-1)
    r3 = np.concatenate([(d0 / g)[..., None], -(ps - qs) / g[..., None]], axis=-1)

    cross = np.cross(ps, qs)
    cnorm = np.linalg.norm(cross, axis=-1)
    scale = (1.0 + np.sqrt(pp)) * (1.0 + np.sqrt(qq))
    collinear = cnorm < 1e-12 * scale

    safe = np.where(collinear, 1.0, cnorm)
    r2_spatial = cross / safe[..., None]
    # p0 + q0 (p.q) and q0 + p0 (p.q) with the mass shell substituted
    bp = q0 * pdq - p0 * qq
    bq = p0 * pdq - q0 * pp
    r1 = np.empty(r0.shape)
    r1[..., 0] = 2.0 * cnorm / (g * rs)
    r1[..., 1:] = 2.0 * (ps * bp[..., None] + qs * bq[..., None]) / (g * rs * safe)[..., None]

    if np.any(collinear):
        n = _orthogonal_unit(_unit(ps[collinear] - qs[collinear]))
        r2_spatial[collinear] = n
        r2c = np.concatenate([np.zeros(n.shape[:-1] + (1,)), n], axis=-1)
        r1[collinear] = _minkowski_complement(r0[collinear], r2c, r3[collinear])

    r2 = np.concatenate([np.zeros(r0.shape[:-1] + (1,)), r2_spatial], axis=-1)
    # one Minkowski Gram-Schmidt pass restores orthonormality lost to rounding
    for r, sign in ((r0, -1.0), (r2, 1.0), (r3, 1.0)):
        r1 = r1 - sign * minkowski_dot(r1 @ ETA, r @ ETA)[..., None] * r
    r1 = r1 / np.sqrt(minkowski_dot(r1 @ ETA, r1 @ ETA))[..., None]
    return np.stack([r0, r1, r2, r3], axis=-2)


def random_momenta(rng: np.random.Generator, size: int, scale: float = 3.0) -> np.ndarray:
    """Momenta with exponential radial law of the given scale and isotropic direction."""
    radius = rng.exponential(scale, size)
    direction = rng.normal(size=(size, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return radius[:, None] * direction
