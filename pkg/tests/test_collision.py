"""Nonlinear collision operator: annihilation, weak forms, entropy, Gamma."""

import numpy as np
import pytest

import polykin as pk
from polykin.collision import (DomainError, GridField, InvariantProvider,
                               LinearCombination, MaxwellianProvider,
                               SqrtMaxwellianWeighted, apply_linearized,
                               entropy_production, gamma_field,
                               invariant_providers, q_collision,
                               q_collision_field, sample_on_grid, weak_bracket,
                               weak_bracket_many)


@pytest.fixture(scope="module")
def small(desk, hs_desk):
    grid = pk.build_velocity_grid(5.5, 5)
    squad = pk.build_sphere_quadrature(4, 8)
    return desk, hs_desk, grid, squad


def _perturbed(mix, seed, eps=0.3):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.5, 1.5, size=mix.r)
    ph = rng.uniform(0, 2 * np.pi, size=mix.r)
    base = MaxwellianProvider(mix, mix.linearization_equilibrium())

    def f(alpha, i, xi):
        xi = np.asarray(xi)
        k = mix.flat_index(alpha, i)
        return base(alpha, i, xi) * (
            1.0 + eps * c[k] * np.sin(xi[..., 0] + 0.5 * xi[..., 1] + ph[k]))
    return f


def test_zero_distribution_gives_zero(small):
    mix, model, grid, squad = small
    q = q_collision_field(lambda a, i, xi: np.zeros(np.shape(xi)[:-1]),
                          mix, model, grid, squad)
    assert np.all(q == 0.0)


def test_maxwellian_annihilation_three_settings(small):
    mix, model, grid, squad = small
    settings = [
        mix.equilibrium(),
        mix.equilibrium(densities=(1.3, 0.7), bulk_velocity=(0.2, -0.1, 0.3),
                        temperature=1.4),
        mix.equilibrium(densities=(0.5, 2.0), bulk_velocity=(-0.4, 0.2, 0.1),
                        temperature=0.8),
    ]
    for params in settings:
        prov = MaxwellianProvider(mix, params)
        Q, loss = q_collision_field(prov, mix, model, grid, squad,
                                    return_loss=True)
        assert float(np.max(np.abs(Q) / np.maximum(loss, 1e-300))) <= 1e-12


def test_bilinearity_scaling(small):
    mix, model, grid, squad = small
    f = _perturbed(mix, 1)
    q1 = q_collision_field(f, mix, model, grid, squad)
    fa = lambda a, i, xi: 2.0 * f(a, i, xi)
    q2 = q_collision_field(fa, mix, model, grid, squad)
    np.testing.assert_allclose(q2, 4.0 * q1, rtol=1e-12, atol=1e-18)


def test_scalar_matches_field(small):
    mix, model, grid, squad = small
    f = _perturbed(mix, 2)
    Q = q_collision_field(f, mix, model, grid, squad)
    for node in (3, 60):
        v = q_collision(f, mix, model, grid, squad, 1, 0, grid.nodes[node])
        assert v == Q[mix.flat_index(1, 0), node]


def test_species_relabeling_symmetry():
    # two identical species: relabeling swaps the blocks of Q
    spec = {"mass": 1.0, "levels": [0.0, 0.7], "weights": [1.0, 2.0],
            "density": 0.9}
    mix = pk.build_mixture({"species": [dict(spec, name="a"),
                                        dict(spec, name="b")]})
    model = pk.hard_sphere(1.0, s=2)
    grid = pk.build_velocity_grid(5.0, 4)
    squad = pk.build_sphere_quadrature(3, 6)
    base = MaxwellianProvider(mix, mix.linearization_equilibrium())

    def f(alpha, i, xi):
        xi = np.asarray(xi)
        return base(alpha, i, xi) * (1.0 + 0.2 * np.cos(xi[..., 0] + 0.1 * alpha
                                                        - 0.1 * (1 - alpha)))

    def f_swapped(alpha, i, xi):
        return f(1 - alpha, i, xi)

    q = q_collision_field(f, mix, model, grid, squad)
    q_sw = q_collision_field(f_swapped, mix, model, grid, squad)
    np.testing.assert_allclose(q[:2], q_sw[2:], rtol=1e-11, atol=1e-16)
    np.testing.assert_allclose(q[2:], q_sw[:2], rtol=1e-11, atol=1e-16)


def test_invariant_brackets_exact(small):
    mix, model, grid, squad = small
    f = _perturbed(mix, 3)
    vals, scales = weak_bracket_many(f, invariant_providers(mix), mix, model,
                                     grid, squad)
    assert np.all(np.abs(vals) <= 1e-12 * scales)


def test_bracket_maxwellian_zero(small):
    mix, model, grid, squad = small
    m_prov = MaxwellianProvider(mix, mix.linearization_equilibrium())
    val = weak_bracket(m_prov, m_prov, mix, model, grid, squad)
    assert abs(val) < 1e-14


def test_bracket_matches_direct_quadrature(small):
    mix, model, grid, squad = small
    f = _perturbed(mix, 4)
    g = _perturbed(mix, 5, eps=0.2)
    sym = weak_bracket(f, g, mix, model, grid, squad)
    Q = q_collision_field(f, mix, model, grid, squad)
    g_sampled = sample_on_grid(g, mix, grid)
    direct = grid.weight * float(np.sum(Q * g_sampled))
    assert sym == pytest.approx(direct, rel=1e-6)


def test_entropy_signs(small):
    mix, model, grid, squad = small
    m_prov = MaxwellianProvider(mix, mix.linearization_equilibrium())
    w0, s0 = entropy_production(m_prov, mix, model, grid, squad,
                                return_scale=True)
    assert abs(w0) <= 1e-12 * s0
    for seed in range(6):
        f = _perturbed(mix, 10 + seed, eps=0.1 + 0.05 * seed)
        w = entropy_production(f, mix, model, grid, squad)
        assert w < 0.0


def test_entropy_magnitude_stable_under_refinement(desk, hs_desk):
    squad = pk.build_sphere_quadrature(4, 8)
    f = _perturbed(desk, 99, eps=0.1)
    vals = []
    for N in (6, 8):
        grid = pk.build_velocity_grid(5.5, N)
        vals.append(entropy_production(f, desk, hs_desk, grid, squad))
    assert vals[0] < 0 and vals[1] < 0
    assert abs(vals[0] - vals[1]) / abs(vals[1]) < 0.2


def test_entropy_rejects_nonpositive(small):
    mix, model, grid, squad = small

    def bad(alpha, i, xi):
        xi = np.asarray(xi)
        return np.where(xi[..., 0] > 4.0, -1.0, 1.0)

    with pytest.raises(DomainError, match="alpha"):
        entropy_production(bad, mix, model, grid, squad)


def test_gamma_zero_cases(small):
    mix, model, grid, squad = small
    z = gamma_field(lambda a, i, xi: np.zeros(np.shape(xi)[:-1]),
                    mix, model, grid, squad)
    assert np.all(z == 0.0)
    m_prov = MaxwellianProvider(mix, mix.linearization_equilibrium())
    g0 = gamma_field(lambda a, i, xi: np.sqrt(m_prov(a, i, xi)),
                     mix, model, grid, squad)
    _, loss = q_collision_field(m_prov, mix, model, grid, squad,
                                return_loss=True)
    sqm = np.sqrt(pk.maxwellian_field(mix, mix.linearization_equilibrium(), grid))
    assert float(np.max(np.abs(g0 * sqm) / np.maximum(loss, 1e-300))) <= 1e-12


def test_gamma_orthogonal_to_kernel(small):
    mix, model, grid, squad = small

    def h(alpha, i, xi):
        xi = np.asarray(xi)
        return np.sin(0.5 * xi[..., 0]) + 0.1 * alpha - 0.05 * i

    f_h = SqrtMaxwellianWeighted(mix, h)
    vals, scales = weak_bracket_many(f_h, invariant_providers(mix), mix, model,
                                     grid, squad)
    assert np.all(np.abs(vals) <= 1e-10 * scales)


def test_linearization_consistency(small):
    mix, model, grid, squad = small

    def h(alpha, i, xi):
        xi = np.asarray(xi)
        return np.cos(0.7 * xi[..., 0]) * (1.0 + 0.2 * alpha - 0.1 * i) \
            * np.exp(-0.1 * np.sum(xi * xi, -1))

    m_prov = MaxwellianProvider(mix, mix.linearization_equilibrium())
    Lh = apply_linearized(h, mix, model, grid, squad)
    sqrt_m = np.sqrt(pk.maxwellian_field(mix, mix.linearization_equilibrium(),
                                         grid))
    resid = {}
    for d in (1e-2, 1e-3):
        f_d = LinearCombination([(1.0, m_prov),
                                 (d, SqrtMaxwellianWeighted(mix, h))])
        Q = q_collision_field(f_d, mix, model, grid, squad)
        resid[d] = float(np.linalg.norm(Q / d + sqrt_m * Lh))
    C = resid[1e-2] / 1e-2 * 1.5
    assert resid[1e-3] <= C * 1e-3


def test_grid_field_interpolation(mono, hs_mono):
    def f_s(alpha, i, xi):
        xi = np.asarray(xi)
        return 1.0 + 0.3 * xi[..., 0] - 0.02 * xi[..., 1] * xi[..., 2] \
            + 0.05 * np.sin(xi[..., 2])

    errs = []
    for N in (8, 16):
        grid = pk.build_velocity_grid(5.5, N)
        gf = GridField(mono, grid, sample_on_grid(f_s, mono, grid))
        pts = np.random.default_rng(1).uniform(-4, 4, size=(200, 3))
        np.testing.assert_array_equal(gf(0, 0, grid.nodes),
                                      f_s(0, 0, grid.nodes))
        errs.append(float(np.max(np.abs(gf(0, 0, pts) - f_s(0, 0, pts)))))
    assert errs[1] < errs[0] / 3.0          # second-order interpolation
    grid = pk.build_velocity_grid(5.5, 8)
    gf = GridField(mono, grid, sample_on_grid(f_s, mono, grid))
    assert gf(0, 0, np.array([7.0, 0.0, 0.0])) == 0.0


def test_grid_provider_through_q(mono, hs_mono):
    # grid-sampled Maxwellian behaves like the analytic one at loose tolerance
    grid = pk.build_velocity_grid(5.5, 8)
    squad = pk.build_sphere_quadrature(4, 8)
    m_prov = MaxwellianProvider(mono, mono.linearization_equilibrium())
    gf = GridField(mono, grid, sample_on_grid(m_prov, mono, grid))
    q_grid = q_collision_field(gf, mono, hs_mono, grid, squad)
    _, loss = q_collision_field(m_prov, mono, hs_mono, grid, squad,
                                return_loss=True)
    # interpolation error dominates; just require small against loss scale
    assert float(np.max(np.abs(q_grid) / np.maximum(loss, 1e-300))) < 0.1


def test_invariant_provider_matches_sampled(desk):
    grid = pk.build_velocity_grid(5.5, 5)
    inv = pk.collision_invariants(desk, grid)
    for t, prov in enumerate(invariant_providers(desk)):
        sampled = sample_on_grid(prov, desk, grid)
        np.testing.assert_allclose(sampled, inv[t], rtol=0, atol=1e-14)
