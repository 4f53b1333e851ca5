"""Gas mixture model: species, collision channels, Maxwellians, invariants.

A mixture is a list of species, each with a mass, a set of discrete
internal energy levels with degeneracy weights, and a number density.
Everything downstream (channel enumeration, equilibria, the collision
invariant basis) is derived from this static description.  The library is
nondimensional throughout; the linearized pipeline always works at bulk
velocity 0 and temperature 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grids import VelocityGrid


class ValidationError(ValueError):
    """Raised when a mixture or model description violates an invariant."""


@dataclass(frozen=True)
class Species:
    """One species: mass, internal energy levels, weights, number density."""

    mass: float
    levels: tuple[float, ...]
    weights: tuple[float, ...]
    density: float
    name: str = ""

    @property
    def n_levels(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class EquilibriumParams:
    """Parameters (n_alpha, u, T) selecting a Maxwellian equilibrium."""

    densities: tuple[float, ...]
    bulk_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperature: float = 1.0


@dataclass(frozen=True)
class CollisionChannel:
    """One admissible index tuple (alpha, beta, i, j, k, l).

    ``delta_I`` is the signed internal energy gap of the forward collision
    (i, j) -> (k, l); ``delta_I_tilde`` its rescaling to squared-velocity
    units.  ``delta_I_hat`` is the gap of the regrouped pairing
    (xi, xi_*' | xi', xi_*) used by the disparate-mass kernel route and is
    None for equal masses.
    """

    alpha: int
    beta: int
    i: int
    j: int
    k: int
    l: int
    delta_I: float
    delta_I_tilde: float
    delta_I_hat: float | None


class Mixture:
    """Validated mixture with a fixed flat (species, level) indexing.

    The flat index runs species-major, level-minor and is the block layout
    used by every assembled operator.
    """

    def __init__(self, species: Sequence[Species], temperature: float = 1.0):
        if len(species) == 0:
            raise ValidationError("species: list must be nonempty")
        if temperature <= 0:
            raise ValidationError("temperature: must be positive")
        self.species = tuple(species)
        self.temperature = float(temperature)
        self.s = len(self.species)
        self.r_per_species = tuple(sp.n_levels for sp in self.species)
        self.r = sum(self.r_per_species)
        self.offsets = tuple(np.cumsum((0,) + self.r_per_species[:-1]).tolist())
        self.masses = np.array([sp.mass for sp in self.species])
        self.densities = np.array([sp.density for sp in self.species])
        # flat per-level tables
        self.level_species = np.concatenate(
            [np.full(sp.n_levels, a, dtype=int) for a, sp in enumerate(self.species)]
        )
        self.level_energy = np.concatenate([np.array(sp.levels) for sp in self.species])
        self.level_weight = np.concatenate([np.array(sp.weights) for sp in self.species])
        self.level_mass = self.masses[self.level_species]

    def flat_index(self, alpha: int, i: int) -> int:
        return self.offsets[alpha] + i

    def unflatten(self, idx: int) -> tuple[int, int]:
        alpha = int(self.level_species[idx])
        return alpha, idx - self.offsets[alpha]

    def level_pairs(self):
        """All (alpha, i) pairs in flat order."""
        for alpha, sp in enumerate(self.species):
            for i in range(sp.n_levels):
                yield alpha, i

    def equilibrium(self, densities=None, bulk_velocity=(0.0, 0.0, 0.0),
                    temperature=None) -> EquilibriumParams:
        if densities is None:
            densities = tuple(self.densities.tolist())
        if temperature is None:
            temperature = self.temperature
        return EquilibriumParams(tuple(float(n) for n in densities),
                                 tuple(float(u) for u in bulk_velocity),
                                 float(temperature))

    def linearization_equilibrium(self) -> EquilibriumParams:
        """The u = 0, T = 1 equilibrium every linearized quantity refers to."""
        return EquilibriumParams(tuple(self.densities.tolist()), (0.0, 0.0, 0.0), 1.0)


def build_mixture(config: dict) -> Mixture:
    """Construct a validated Mixture from a plain-dict description.

    Levels are stored sorted ascending (weights permuted along); this fixes
    a canonical channel enumeration.  Validation errors name the offending
    field.
    """
    if not isinstance(config, dict):
        raise ValidationError("mixture: expected an object")
    species_cfg = config.get("species")
    if not species_cfg:
        raise ValidationError("species: list must be nonempty")
    species = []
    for idx, sc in enumerate(species_cfg):
        name = sc.get("name", f"species{idx}")
        mass = float(sc.get("mass", 0.0))
        if mass <= 0:
            raise ValidationError(f"{name}.mass: must be positive, got {mass}")
        density = float(sc.get("density", 0.0))
        if density <= 0:
            raise ValidationError(f"{name}.density: must be positive, got {density}")
        levels = [float(x) for x in sc.get("levels", [])]
        if len(levels) == 0:
            raise ValidationError(f"{name}.levels: need at least one level")
        if any(x < 0 for x in levels):
            raise ValidationError(f"{name}.levels: energy levels must be nonnegative")
        weights = [float(x) for x in sc.get("weights", [])]
        if len(weights) != len(levels):
            raise ValidationError(f"{name}.weights: length must match levels")
        if any(w <= 0 for w in weights):
            raise ValidationError(f"{name}.weights: weights must be positive")
        order = np.argsort(levels, kind="stable")
        species.append(Species(
            mass=mass,
            levels=tuple(levels[o] for o in order),
            weights=tuple(weights[o] for o in order),
            density=density,
            name=name,
        ))
    return Mixture(species, temperature=float(config.get("temperature", 1.0)))


def enumerate_channels(mix: Mixture) -> list[CollisionChannel]:
    """All of Omega: sum over (alpha, beta) of r_alpha^2 * r_beta^2 channels."""
    out = []
    for alpha, sa in enumerate(mix.species):
        for beta, sb in enumerate(mix.species):
            ma, mb = sa.mass, sb.mass
            tilde = (ma + mb) / (ma * mb)
            hat = None if ma == mb else (ma - mb) / (ma * mb)
            for i in range(sa.n_levels):
                for j in range(sb.n_levels):
                    for k in range(sa.n_levels):
                        for l in range(sb.n_levels):
                            d = sa.levels[k] + sb.levels[l] - sa.levels[i] - sb.levels[j]
                            d_hat = None
                            if hat is not None:
                                # gap of the (xi, xi_*' | xi', xi_*) pairing
                                d_hat = hat * (sa.levels[i] + sb.levels[l]
                                               - sa.levels[k] - sb.levels[j])
                            out.append(CollisionChannel(
                                alpha=alpha, beta=beta, i=i, j=j, k=k, l=l,
                                delta_I=d, delta_I_tilde=tilde * d, delta_I_hat=d_hat,
                            ))
    return out


def reverse_channel(ch: CollisionChannel) -> CollisionChannel:
    """The reverse collision (k, l) -> (i, j); all gaps change sign."""
    return CollisionChannel(
        alpha=ch.alpha, beta=ch.beta, i=ch.k, j=ch.l, k=ch.i, l=ch.j,
        delta_I=-ch.delta_I, delta_I_tilde=-ch.delta_I_tilde,
        delta_I_hat=None if ch.delta_I_hat is None else -ch.delta_I_hat,
    )


def partition_function(mix: Mixture, alpha: int, T: float) -> float:
    """q_alpha = sum_i phi_i * exp(-I_i / T)."""
    if T <= 0:
        raise ValidationError("temperature: must be positive")
    sp = mix.species[alpha]
    return float(np.sum(np.array(sp.weights) * np.exp(-np.array(sp.levels) / T)))


def maxwellian(mix: Mixture, params: EquilibriumParams, alpha: int, i: int,
               xi: np.ndarray) -> np.ndarray:
    """Equilibrium distribution component at velocity xi (broadcasts over xi).

    M = n phi_i m^{3/2} / ((2 pi T)^{3/2} q) * exp(-(m |xi-u|^2 + 2 I_i) / (2T)).
    """
    sp = mix.species[alpha]
    T = params.temperature
    q = partition_function(mix, alpha, T)
    xi = np.asarray(xi, dtype=float)
    du = xi - np.asarray(params.bulk_velocity)
    r2 = np.sum(du * du, axis=-1)
    pref = params.densities[alpha] * sp.weights[i] * sp.mass**1.5 \
        / ((2.0 * np.pi * T)**1.5 * q)
    return pref * np.exp(-(sp.mass * r2 + 2.0 * sp.levels[i]) / (2.0 * T))


def maxwellian_field(mix: Mixture, params: EquilibriumParams,
                     grid: VelocityGrid) -> np.ndarray:
    """All components sampled on the grid: shape (r, grid.size)."""
    out = np.empty((mix.r, grid.size))
    for alpha, i in mix.level_pairs():
        out[mix.flat_index(alpha, i)] = maxwellian(mix, params, alpha, i, grid.nodes)
    return out


def collision_invariants(mix: Mixture, grid: VelocityGrid) -> np.ndarray:
    """The s+4 invariant fields sampled at every (level, node).

    Order: e_1 .. e_s, m xi_x, m xi_y, m xi_z, m |xi|^2 + 2 I.
    Shape (s + 4, r, grid.size).
    """
    out = np.zeros((mix.s + 4, mix.r, grid.size))
    for alpha, i in mix.level_pairs():
        row = mix.flat_index(alpha, i)
        m = mix.species[alpha].mass
        out[alpha, row] = 1.0
        out[mix.s + 0, row] = m * grid.nodes[:, 0]
        out[mix.s + 1, row] = m * grid.nodes[:, 1]
        out[mix.s + 2, row] = m * grid.nodes[:, 2]
        out[mix.s + 3, row] = m * grid.speeds**2 + 2.0 * mix.species[alpha].levels[i]
    return out


def weighted_null_basis(mix: Mixture, grid: VelocityGrid,
                        params: EquilibriumParams | None = None) -> np.ndarray:
    """ker L basis: each invariant multiplied pointwise by sqrt(M) at u=0, T=1."""
    if params is None:
        params = mix.linearization_equilibrium()
    if params.temperature != 1.0 or any(u != 0.0 for u in params.bulk_velocity):
        raise ValidationError("weighted_null_basis: linearization requires u=0, T=1")
    inv = collision_invariants(mix, grid)
    sqrt_m = np.sqrt(maxwellian_field(mix, params, grid))
    return inv * sqrt_m[None, :, :]
