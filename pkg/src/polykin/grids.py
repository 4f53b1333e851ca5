"""Velocity-space grids and angular quadrature rules.

The velocity grid is a uniform, cell-centered cube; every integral over
R^3 in the library is approximated by the midpoint rule on it.  Angular
integrals use product rules: Gauss-Legendre in the cosine of the polar
angle times a uniform azimuthal rule, which integrates 4*pi exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped from [-1, 1] to [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cell-centered cubic grid on [-R, R]^3 with midpoint weights."""

    half_width: float
    points_per_axis: int
    axis: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)       # (N^3, 3), C-ordered over (ix, iy, iz)
    speeds: np.ndarray = field(repr=False)      # (N^3,)
    weight: float = 0.0                         # h^3, one weight per node

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def step(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis


def build_velocity_grid(half_width: float, points_per_axis: int) -> VelocityGrid:
    """Build the cell-centered grid; for even N no node sits at the origin."""
    if half_width <= 0:
        raise ValueError("grid half_width must be positive")
    if points_per_axis < 4:
        raise ValueError("grid points_per_axis must be >= 4")
    n = int(points_per_axis)
    h = 2.0 * half_width / n
    axis = -half_width + h * (np.arange(n) + 0.5)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    nodes = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    speeds = np.linalg.norm(nodes, axis=1)
    return VelocityGrid(
        half_width=float(half_width),
        points_per_axis=n,
        axis=axis,
        nodes=nodes,
        speeds=speeds,
        weight=h**3,
    )


@dataclass(frozen=True)
class SphereQuadrature:
    """Product rule on S^2: Gauss-Legendre in cos(polar) x uniform azimuth.

    Weights sum to 4*pi exactly.  ``exactness_degree`` is the spherical
    harmonic degree integrated exactly.
    """

    nodes: np.ndarray = field(repr=False)       # (n, 3) unit vectors
    weights: np.ndarray = field(repr=False)     # (n,), sum 4*pi
    n_polar: int = 0
    n_azimuthal: int = 0
    exactness_degree: int = 0


def build_sphere_quadrature(n_polar: int = 6, n_azimuthal: int = 12) -> SphereQuadrature:
    if n_polar < 1 or n_azimuthal < 2:
        raise ValueError("sphere quadrature needs n_polar >= 1 and n_azimuthal >= 2")
    u, wu = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * np.pi * (np.arange(n_azimuthal) + 0.5) / n_azimuthal
    su = np.sqrt(1.0 - u**2)
    nodes = np.empty((n_polar * n_azimuthal, 3))
    weights = np.empty(n_polar * n_azimuthal)
    k = 0
    for iu in range(n_polar):
        for ip in range(n_azimuthal):
            nodes[k] = (su[iu] * np.cos(phi[ip]), su[iu] * np.sin(phi[ip]), u[iu])
            weights[k] = wu[iu] * (2.0 * np.pi / n_azimuthal)
            k += 1
    return SphereQuadrature(
        nodes=nodes,
        weights=weights,
        n_polar=n_polar,
        n_azimuthal=n_azimuthal,
        exactness_degree=min(2 * n_polar - 1, n_azimuthal - 1),
    )


@dataclass(frozen=True)
class PlaneQuadrature:
    """Polar rule for integrals over a 2D plane embedded in R^3.

    Radial Gauss-Legendre on [0, R_w] (no node at 0, so integrable 1/|w|
    singularities are admissible) times a uniform angular rule.  The
    ``weights`` already contain the polar Jacobian r and the angular step.
    """

    r_nodes: np.ndarray = field(repr=False)     # (n_r,)
    angles: np.ndarray = field(repr=False)      # (n_ang,)
    weights: np.ndarray = field(repr=False)     # (n_r, n_ang), includes r * dtheta
    radial_weights: np.ndarray = field(repr=False)
    cutoff: float = 0.0
    n_radial: int = 0
    n_angular: int = 0


def build_plane_quadrature(n_radial: int = 24, n_angular: int = 16,
                           cutoff: float = 7.0) -> PlaneQuadrature:
    if n_radial < 2 or n_angular < 4:
        raise ValueError("plane quadrature needs n_radial >= 2 and n_angular >= 4")
    r, wr = gauss_legendre(n_radial, 0.0, cutoff)
    angles = 2.0 * np.pi * (np.arange(n_angular) + 0.5) / n_angular
    weights = (wr * r)[:, None] * np.full(n_angular, 2.0 * np.pi / n_angular)[None, :]
    return PlaneQuadrature(
        r_nodes=r,
        angles=angles,
        weights=weights,
        radial_weights=wr,
        cutoff=float(cutoff),
        n_radial=n_radial,
        n_angular=n_angular,
    )
