"""Product quadrature on the unit sphere."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Gauss-Legendre in ``cos(theta)`` times a uniform azimuthal rule.

    The polar axis is the lab ``z`` axis.  Weights sum to ``4 pi``.  With an
    even number of nodes in both directions the rule is symmetric under
    ``omega -> -omega``, which the collision kernels exploit.
    """

    n_polar: int = 16
    n_azimuth: int = 16
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_polar < 1 or self.n_azimuth < 1:
            raise ValueError("node counts must be positive")
        x, w = np.polynomial.legendre.leggauss(self.n_polar)
        phi = 2.0 * np.pi * (np.arange(self.n_azimuth) + 0.5) / self.n_azimuth
        ct, ph = np.meshgrid(x, phi, indexing="ij")
        st = np.sqrt(1.0 - ct**2)
        nodes = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
        weights = np.repeat(w * (2.0 * np.pi / self.n_azimuth), self.n_azimuth)
        object.__setattr__(self, "nodes", np.ascontiguousarray(nodes))
        object.__setattr__(self, "weights", weights)

    @property
    def antipodal(self) -> bool:
        return self.n_polar % 2 == 0 and self.n_azimuth % 2 == 0

    def half(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes of the upper hemisphere with doubled weights when the rule is
        antipodally symmetric, otherwise the full rule.

        Integrands that are invariant under ``omega -> -omega`` give identical
        sums either way.
        """
        if not self.antipodal:
            return self.nodes, self.weights
        up = self.nodes[:, 2] > 0
        return np.ascontiguousarray(self.nodes[up]), 2.0 * self.weights[up]

    def integrate(self, func) -> float:
        return float(np.dot(self.weights, func(self.nodes)))
