"""Mixture construction, channel enumeration, equilibria, invariants."""

import numpy as np
import pytest

import polykin as pk
from polykin.mixture import ValidationError


def test_build_desk_mixture(desk):
    assert desk.s == 2
    assert desk.r == 4
    assert desk.r_per_species == (2, 2)
    assert desk.offsets == (0, 2)


def test_monatomic_limit(mono):
    assert mono.s == 1
    assert mono.r == 1
    assert mono.species[0].n_levels == 1


@pytest.mark.parametrize("field,patch", [
    ("mass", {"mass": 0.0}),
    ("density", {"density": -1.0}),
    ("weights", {"weights": [1.0, -2.0]}),
    ("levels", {"levels": [0.0, -0.5]}),
])
def test_validation_names_field(field, patch):
    spec = {"name": "bad", "mass": 1.0, "levels": [0.0, 1.0],
            "weights": [1.0, 1.0], "density": 1.0}
    spec.update(patch)
    with pytest.raises(ValidationError, match=field):
        pk.build_mixture({"species": [spec]})


def test_empty_species_rejected():
    with pytest.raises(ValidationError, match="species"):
        pk.build_mixture({"species": []})


def test_levels_sorted_ascending():
    mix = pk.build_mixture({"species": [
        {"mass": 1.0, "levels": [2.0, 0.0, 1.0], "weights": [3.0, 1.0, 2.0],
         "density": 1.0}]})
    assert mix.species[0].levels == (0.0, 1.0, 2.0)
    assert mix.species[0].weights == (1.0, 2.0, 3.0)


def test_flat_index_roundtrip(desk):
    for alpha, i in desk.level_pairs():
        assert desk.unflatten(desk.flat_index(alpha, i)) == (alpha, i)


def test_channel_count(desk, mono):
    # sum over (alpha, beta) of r_a^2 r_b^2; brute count for the desk case
    chans = pk.enumerate_channels(desk)
    assert len(chans) == sum(
        desk.r_per_species[a] ** 2 * desk.r_per_species[b] ** 2
        for a in range(2) for b in range(2))
    assert len(chans) == 64
    assert len(pk.enumerate_channels(mono)) == 1
    assert pk.enumerate_channels(mono)[0].delta_I == 0.0


def test_channel_gaps(desk):
    # channel (alpha=0, beta=1, i=0, j=0, k=1, l=1) in 0-based indexing
    ch = next(c for c in pk.enumerate_channels(desk)
              if (c.alpha, c.beta, c.i, c.j, c.k, c.l) == (0, 1, 0, 0, 1, 1))
    assert ch.delta_I == pytest.approx(1.0 + 0.5 - 0.0 - 0.0)
    assert ch.delta_I_tilde == pytest.approx(1.5 * 1.5)    # (m_a+m_b)/(m_a m_b) = 3/2
    # equal masses leave delta_I_hat undefined
    aa = next(c for c in pk.enumerate_channels(desk) if c.alpha == c.beta)
    assert aa.delta_I_hat is None


def test_partition_function(desk):
    assert pk.partition_function(desk, 0, 1.0) == pytest.approx(1.0 + np.exp(-1.0))
    assert pk.partition_function(desk, 1, 1.0) == pytest.approx(
        1.0 + 2.0 * np.exp(-0.5))
    flat = pk.build_mixture({"species": [
        {"mass": 1.0, "levels": [0.0, 0.0], "weights": [1.0, 2.5], "density": 1.0}]})
    assert pk.partition_function(flat, 0, 0.7) == pytest.approx(3.5)


def test_partition_function_monotone_in_T(desk):
    temps = np.linspace(0.2, 5.0, 30)
    for alpha in range(desk.s):
        q = [pk.partition_function(desk, alpha, t) for t in temps]
        assert np.all(np.diff(q) >= -1e-15)


def test_maxwellian_point_value(mono):
    params = mono.linearization_equilibrium()
    val = pk.maxwellian(mono, params, 0, 0, np.zeros(3))
    assert val == pytest.approx((2.0 * np.pi) ** -1.5, rel=1e-14)


def test_maxwellian_translation_invariance(desk):
    rng = np.random.default_rng(0)
    u = np.array([0.3, -0.2, 0.5])
    shifted = desk.equilibrium(bulk_velocity=tuple(u), temperature=1.3)
    rest = desk.equilibrium(temperature=1.3)
    xi = rng.normal(size=(10, 3))
    for alpha, i in desk.level_pairs():
        np.testing.assert_allclose(
            pk.maxwellian(desk, shifted, alpha, i, xi),
            pk.maxwellian(desk, rest, alpha, i, xi - u), rtol=1e-14)


def test_maxwellian_mass_normalization(desk):
    # sum_i int M_{a,i} = n_a, to grid accuracy
    grid = pk.build_velocity_grid(6.5, 24)
    params = desk.equilibrium(bulk_velocity=(0.1, 0.0, -0.2), temperature=0.9)
    field = pk.maxwellian_field(desk, params, grid)
    for alpha in range(desk.s):
        rows = [desk.flat_index(alpha, i)
                for i in range(desk.species[alpha].n_levels)]
        mass = grid.weight * float(np.sum(field[rows]))
        assert mass == pytest.approx(desk.species[alpha].density, rel=5e-3)


def test_collision_invariants_structure(desk):
    grid = pk.build_velocity_grid(5.5, 6)
    inv = pk.collision_invariants(desk, grid)
    assert inv.shape == (6, desk.r, grid.size)
    # e_alpha: 1 on own block, 0 elsewhere
    assert np.all(inv[0, :2] == 1.0) and np.all(inv[0, 2:] == 0.0)
    assert np.all(inv[1, 2:] == 1.0) and np.all(inv[1, :2] == 0.0)
    # energy field value
    row = desk.flat_index(1, 1)
    expected = 2.0 * grid.speeds**2 + 2.0 * 0.5
    np.testing.assert_allclose(inv[5, row], expected, rtol=1e-14)


def test_invariants_linearly_independent(desk):
    grid = pk.build_velocity_grid(5.5, 8)
    basis = pk.weighted_null_basis(desk, grid).reshape(6, -1)
    gram = grid.weight * basis @ basis.T
    assert np.linalg.det(gram) > 0
    assert np.linalg.cond(gram) < 1e6


def test_weighted_null_basis_support(desk):
    grid = pk.build_velocity_grid(5.5, 6)
    wb = pk.weighted_null_basis(desk, grid)
    assert np.all(wb[0, 2:] == 0.0)
    assert np.all(wb[0, :2] > 0.0)
    with pytest.raises(ValidationError):
        pk.weighted_null_basis(desk, grid,
                               desk.equilibrium(temperature=2.0))
