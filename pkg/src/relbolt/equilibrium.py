"""Juttner equilibria, modified Bessel functions and moment fitting.

Boltzmann's constant is folded into the temperature: ``theta`` below always
means the product ``k_B * theta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import GridFunction, MomentumGrid
from .kinematics import minkowski_dot

UNDERFLOW_Z = 700.0


class BesselUnderflowWarning(RuntimeWarning):
    """``K_j(z)`` underflows double precision; 0 was returned."""


class FitError(RuntimeError):
    """Newton iteration for the Juttner parameters did not converge."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def _bessel_prefactor(j: int) -> float:
    return 2.0**j * math.factorial(j) / math.factorial(2 * j)


def bessel_k_scaled(j: int, z: float, tol: float = 1e-13) -> float:
    """``exp(z) K_j(z)`` from the integral definition.

    With ``lambda = z cosh(t)`` the defining integral becomes

        K_j(z) = c_j z^j int_0^inf exp(-z cosh t) sinh(t)^(2j) dt,

    whose integrand is smooth, even in ``t`` and double-exponentially
    decaying, so the trapezoid rule converges geometrically; the step is
    halved until successive sums agree to ``tol``.
    """
    if j not in range(5):
        raise ValueError("Bessel order must be in 0..4")
    if not z > 0:
        raise ValueError("Bessel argument must be positive")
    # integrand exp(-z (cosh t - 1)) sinh(t)^(2j) is below 1e-18 of its scale past t_max
    t_max = math.acosh(1.0 + (45.0 + 2 * j * 5.0) / z)
    t_max = max(t_max, 1.0)

    def f(t):
        return np.exp(-z * (np.cosh(t) - 1.0)) * np.sinh(t) ** (2 * j)

    step = t_max / 16
    t = np.arange(1, 17) * step
    total = 0.5 * f(0.0) + f(t).sum()
    prev = total * step
    for _ in range(20):
        step *= 0.5
        mid = np.arange(1, int(round(t_max / step)) + 1, 2) * step
        total += f(mid).sum()
        cur = total * step
        if abs(cur - prev) <= tol * abs(cur):
            return _bessel_prefactor(j) * z**j * cur
        prev = cur
    return _bessel_prefactor(j) * z**j * cur


def bessel_k(j: int, z: float) -> float:
    """Modified Bessel function of the second kind ``K_j(z)``, ``j`` in 0..4.

    Returns 0 with a :class:`BesselUnderflowWarning` for ``z > 700``.
    """
    if not z > 0:
        raise ValueError("Bessel argument must be positive")
    if z > UNDERFLOW_Z:
        warnings.warn(f"K_{j}({z}) underflows; returning 0", BesselUnderflowWarning, stacklevel=2)
        return 0.0
    return bessel_k_scaled(j, z) * math.exp(-z)


def _bessel_ratio(theta: float) -> float:
    """``K1(1/theta) / K2(1/theta)`` without underflow."""
    z = 1.0 / theta
    return bessel_k_scaled(1, z) / bessel_k_scaled(2, z)


def _bessel_ratio_derivative(theta: float) -> float:
    """d/dtheta of ``K1(1/theta) / K2(1/theta)``."""
    z = 1.0 / theta
    k0, k1, k2, k3 = (bessel_k_scaled(j, z) for j in range(4))
    # K_nu' = -(K_{nu-1} + K_{nu+1}) / 2, so d/dz (K1/K2) below, then dz/dtheta = -z^2
    dk1 = -0.5 * (k0 + k2)
    dk2 = -0.5 * (k1 + k3)
    dratio_dz = (dk1 * k2 - k1 * dk2) / (k2 * k2)
    return -dratio_dz * z * z


@dataclass(frozen=True)
class JuttnerParams:
    """Density ``n``, temperature ``theta`` (= k_B theta) and bulk four-velocity ``u``."""

    n: float
    theta: float
    u: tuple = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.shape == (3,):
            u = np.concatenate([[math.sqrt(1.0 + u @ u)], u])
        if u.shape != (4,):
            raise ValueError("u must be a four-velocity")
        if not self.n > 0 or not self.theta > 0:
            raise ValueError("n and theta must be positive")
        if u[0] <= 0 or abs(minkowski_dot(u, u) + 1.0) > 1e-12 * max(1.0, u[0] ** 2):
            raise ValueError("u must be future-directed with u.u = -1")
        object.__setattr__(self, "u", tuple(float(c) for c in u))
        object.__setattr__(self, "n", float(self.n))
        object.__setattr__(self, "theta", float(self.theta))

    @classmethod
    def from_velocity(cls, n: float, theta: float, velocity) -> "JuttnerParams":
        """Parameters with spatial four-velocity ``velocity`` (``u = gamma v``)."""
        return cls(n, theta, tuple(np.asarray(velocity, dtype=float)))

    @property
    def u_vec(self) -> np.ndarray:
        return np.asarray(self.u)

    def to_dict(self) -> dict:
        return {"n": self.n, "theta": self.theta, "u": list(self.u)}


def juttner_eval(params: JuttnerParams, p) -> np.ndarray:
    """Relativistic Maxwellian at momenta ``p`` (3-vectors or 4-vectors)."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] == 3:
        p = np.concatenate([np.sqrt(1.0 + np.sum(p * p, axis=-1))[..., None], p], axis=-1)
    z = 1.0 / params.theta
    # n / (4 pi theta K2(z)) exp(p.u / theta), with K2 scaled to avoid underflow
    log_norm = math.log(params.n / (4.0 * math.pi * params.theta * bessel_k_scaled(2, z)))
    expo = (minkowski_dot(p, params.u_vec) + 1.0) / params.theta
    return np.exp(log_norm + expo)


def juttner_grid(grid: MomentumGrid, params: JuttnerParams) -> GridFunction:
    return GridFunction(grid, juttner_eval(params, grid.nodes))


@dataclass(frozen=True)
class MomentSet:
    """Particle number ``I0`` and the energy-momentum column ``T^{mu 0}``."""

    I0: float
    T00: float
    T10: float
    T20: float
    T30: float

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.I0, self.T00, self.T10, self.T20, self.T30])

    @property
    def momentum(self) -> np.ndarray:
        return np.array([self.T10, self.T20, self.T30])

    def check_physical(self):
        if not self.I0 > 0:
            raise ValueError("moment set must have I0 > 0")
        if not self.T00 >= self.I0:
            raise ValueError("moment set must have T00 >= I0")
        if not math.hypot(*self.momentum) < self.T00:
            raise ValueError("total four-momentum must be time-like")

    def to_dict(self) -> dict:
        return {"I0": self.I0, "T00": self.T00, "T10": self.T10, "T20": self.T20, "T30": self.T30}


def moments(h: GridFunction) -> MomentSet:
    """Midpoint-rule ``I^0[h] = int h dp`` and ``T^{mu 0}[h] = int p^mu h dp``."""
    grid = h.grid
    w = grid.cell_volume
    v = h.values
    p = grid.nodes
    return MomentSet(
        I0=float(v.sum() * w),
        T00=float((grid.energies * v).sum() * w),
        T10=float((p[..., 0] * v).sum() * w),
        T20=float((p[..., 1] * v).sum() * w),
        T30=float((p[..., 2] * v).sum() * w),
    )


def juttner_moments(params: JuttnerParams) -> MomentSet:
    """Closed-form moments of the Juttner distribution over all of R^3."""
    n, th = params.n, params.theta
    u = params.u_vec
    enthalpy = n * _bessel_ratio(th) + 4.0 * th * n
    t_col = enthalpy * u * u[0]
    t_col[0] -= th * n
    return MomentSet(n * u[0], *t_col)


def _residual_and_jacobian(x, target):
    n, th, u1, u2, u3 = x
    uv = np.array([u1, u2, u3])
    u0 = math.sqrt(1.0 + uv @ uv)
    ratio = _bessel_ratio(th)
    w = n * ratio + 4.0 * th * n
    model = np.array([n * u0, w * u0 * u0 - th * n, *(w * uv * u0)])
    r = model - target

    dw_dn = ratio + 4.0 * th
    dw_dth = n * _bessel_ratio_derivative(th) + 4.0 * n
    du0 = uv / u0
    jac = np.zeros((5, 5))
    jac[0, 0] = u0
    jac[0, 2:] = n * du0
    jac[1, 0] = dw_dn * u0 * u0 - th
    jac[1, 1] = dw_dth * u0 * u0 - n
    jac[1, 2:] = w * 2.0 * u0 * du0
    for i in range(3):
        jac[2 + i, 0] = dw_dn * uv[i] * u0
        jac[2 + i, 1] = dw_dth * uv[i] * u0
        jac[2 + i, 2:] = w * (uv[i] * du0)
        jac[2 + i, 2 + i] += w * u0
    return r, jac


def _initial_guess(m: MomentSet) -> np.ndarray:
    t00 = m.T00
    vel = m.momentum / t00
    v2 = min(vel @ vel, 1.0 - 1e-12)
    gamma = 1.0 / math.sqrt(1.0 - v2)
    u0 = gamma
    n = m.I0 / u0
    # mean energy per particle, boost-corrected, matched against a log scan in theta
    e_rest = t00 / (m.I0 * u0)
    thetas = np.logspace(-3, 3, 61)
    e_model = np.array([_bessel_ratio(t) + 3.0 * t for t in thetas])
    th = float(thetas[np.argmin(np.abs(np.log(e_model / max(e_rest, 1.0 + 1e-12))))])
    return np.array([n, th, *(gamma * vel)])


def fit_juttner(m: MomentSet, tol: float = 1e-12, max_iter: int = 100) -> JuttnerParams:
    """Juttner parameters whose moments equal ``m``.

    Damped Newton iteration on ``(n, theta, u1, u2, u3)`` with the analytic
    Jacobian, on moments normalized to ``I0 = 1`` (they are linear in ``n``);
    residuals are scaled by ``T00``.
    """
    m.check_physical()
    mass = m.I0
    m = MomentSet(*(m.vector / mass))
    target = m.vector
    x = _initial_guess(m)
    scale = m.T00
    r, jac = _residual_and_jacobian(x, target)
    norm = np.linalg.norm(r) / scale
    for _ in range(max_iter):
        if norm < tol:
            break
        dx = np.linalg.solve(jac, -r)
        step = 1.0
        while True:
            trial = x + step * dx
            if trial[0] > 0 and trial[1] > 0:
                r_t, jac_t = _residual_and_jacobian(trial, target)
                norm_t = np.linalg.norm(r_t) / scale
                if norm_t < norm or step < 1e-6:
                    break
            step *= 0.5
            if step < 1e-10:
                raise FitError("line search failed", norm)
        x, r, jac, norm = trial, r_t, jac_t, norm_t
    if norm >= tol:
        raise FitError("no convergence after %d Newton iterations" % max_iter, norm)
    return JuttnerParams.from_velocity(x[0] * mass, x[1], x[2:])
