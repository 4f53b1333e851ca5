"""Conservation laws, the four collision parametrizations, Lemma 3."""

import numpy as np
import pytest

import polykin as pk
from polykin.kinematics import (build_lemma3_sample, caseII_post_state,
                                caseIII_equal_mass_post_state,
                                caseIII_pairing_channel, caseIII_post_state,
                                check_conservation, conservation_residuals,
                                lemma3_gap, lemma3_rho, make_pair,
                                omega_post_state, plane_basis)


def _channel(mix, alpha, beta, i, j, k, l):
    return next(c for c in pk.enumerate_channels(mix)
                if (c.alpha, c.beta, c.i, c.j, c.k, c.l) == (alpha, beta, i, j, k, l))


def test_omega_elastic_hand_case(desk):
    ch = _channel(desk, 0, 1, 0, 0, 0, 0)
    pair = make_pair([1.0, 0, 0], [-1.0, 0, 0], 1.0, 2.0)
    post = omega_post_state(pair, ch, [0.0, 1.0, 0.0])
    np.testing.assert_allclose(post.xi_prime, [-1 / 3, 4 / 3, 0], atol=1e-15)
    np.testing.assert_allclose(post.xi_star_prime, [-1 / 3, -2 / 3, 0], atol=1e-15)
    mom, en = check_conservation(desk, ch, pair, post)
    # momentum (-1, 0, 0), total energy 3 conserved
    assert np.allclose(mom, 0, atol=1e-14) and abs(en) < 1e-14
    assert 1.0 * 1 + 2.0 * 1 == pytest.approx(3.0)


def test_omega_closed_channel(desk):
    ch = _channel(desk, 0, 1, 0, 0, 1, 1)      # delta-tilde = 2.25
    pair = make_pair([1.0, 0, 0], [-1.0, 0, 0], 1.0, 2.0)   # |g|^2 = 4 < 4.5
    assert omega_post_state(pair, ch, [0.0, 1.0, 0.0]) is None


def test_omega_identity_collision(desk):
    ch = _channel(desk, 0, 0, 0, 0, 0, 0)
    pair = make_pair([0.7, -0.2, 0.1], [-0.3, 0.4, 0.0], 1.0, 1.0)
    post = omega_post_state(pair, ch, pair.g / pair.g_norm)
    np.testing.assert_allclose(post.xi_prime, pair.xi, atol=1e-14)
    np.testing.assert_allclose(post.xi_star_prime, pair.xi_star, atol=1e-14)
    assert post.g_prime_norm == pytest.approx(pair.g_norm)


def test_omega_rejects_nonunit():
    pair = make_pair([1.0, 0, 0], [0.0, 0, 0], 1.0, 1.0)
    mix = pk.build_mixture({"species": [
        {"mass": 1.0, "levels": [0.0], "weights": [1.0], "density": 1.0}]})
    ch = pk.enumerate_channels(mix)[0]
    with pytest.raises(ValueError, match="unit"):
        omega_post_state(pair, ch, [0.0, 2.0, 0.0])


def test_check_conservation_perturbation(desk):
    ch = _channel(desk, 0, 1, 0, 0, 0, 0)
    pair = make_pair([1.0, 0, 0], [-1.0, 0, 0], 1.0, 2.0)
    post = omega_post_state(pair, ch, [0.0, 1.0, 0.0])
    bumped = pk.PostState(post.xi_prime + np.array([1e-3, 0, 0]),
                          post.xi_star_prime, post.g_prime_norm)
    mom, _ = check_conservation(desk, ch, pair, bumped)
    np.testing.assert_allclose(mom, [-1.0 * 1e-3, 0.0, 0.0], atol=1e-12)


def test_caseII_exchange_limit(eqm):
    ch = _channel(eqm, 0, 1, 0, 0, 0, 0)
    pair = make_pair([0.6, 0.1, -0.2], [-0.4, 0.3, 0.1], 1.5, 1.5)
    post = caseII_post_state(pair, eqm, ch, np.zeros(3))
    np.testing.assert_allclose(post.xi_prime, pair.xi_star, atol=1e-14)
    np.testing.assert_allclose(post.xi_star_prime, pair.xi, atol=1e-14)


def test_caseII_spec_example(desk):
    # m = (1, 2), xi = (1,0,0), xi_* = 0, elastic, w = (0,1,0):
    # conservation is checked through check_conservation, not hand values
    ch = _channel(desk, 0, 1, 0, 0, 0, 0)
    pair = make_pair([1.0, 0, 0], [0.0, 0, 0], 1.0, 2.0)
    post = caseII_post_state(pair, desk, ch, [0.0, 1.0, 0.0])
    # chi_pm = -/+ 1/4 per the displayed formula
    np.testing.assert_allclose(post.xi_star_prime, [0.75, 1.0, 0.0], atol=1e-14)
    pre_pair = make_pair(pair.xi, post.xi_prime, 1.0, 2.0)
    mom, en = conservation_residuals(
        1.0, 2.0, pair.xi, post.xi_prime, pair.xi_star, post.xi_star_prime)
    assert np.max(np.abs(mom)) < 1e-14 and abs(en) < 1e-14
    del pre_pair


def test_caseII_inelastic_conservation_property(desk):
    rng = np.random.default_rng(4)
    chans = pk.enumerate_channels(desk)
    worst = 0.0
    for _ in range(300):
        ch = chans[rng.integers(0, len(chans))]
        ma, mb = desk.species[ch.alpha].mass, desk.species[ch.beta].mass
        pair = make_pair(rng.normal(size=3) * 2, rng.normal(size=3) * 2, ma, mb)
        if pair.g_norm < 1e-6:
            continue
        n = pair.g / pair.g_norm
        w = rng.normal(size=3)
        w -= (w @ n) * n
        post = caseII_post_state(pair, desk, ch, w)
        if post is None:
            continue
        sa, sb = desk.species[ch.alpha], desk.species[ch.beta]
        mom, en = conservation_residuals(
            ma, mb, pair.xi, post.xi_prime, pair.xi_star, post.xi_star_prime,
            e_int_pre=sa.levels[ch.i] + sb.levels[ch.j],
            e_int_post=sa.levels[ch.k] + sb.levels[ch.l])
        scale = (ma + mb) * (1.0 + pair.g_norm**2 + float(np.sum(pair.G**2)))
        worst = max(worst, float(np.max(np.abs(mom))) / scale, abs(en) / scale)
    assert worst < 1e-12


def test_caseII_rejects_nonorthogonal_w(desk):
    ch = _channel(desk, 0, 1, 0, 0, 0, 0)
    pair = make_pair([1.0, 0, 0], [0.0, 0, 0], 1.0, 2.0)
    with pytest.raises(ValueError, match="orthogonal"):
        caseII_post_state(pair, desk, ch, [0.5, 1.0, 0.0])


def test_caseIII_identity_and_closed(desk):
    ch = _channel(desk, 0, 1, 0, 0, 0, 0)      # elastic: delta-hat = 0
    pair = make_pair([1.0, 0.2, 0], [0.1, -0.3, 0.4], 1.0, 2.0)
    post = caseIII_post_state(pair, ch, pair.g / pair.g_norm)
    np.testing.assert_allclose(post.xi_prime, pair.xi, atol=1e-13)
    np.testing.assert_allclose(post.xi_star_prime, pair.xi_star, atol=1e-13)
    # find a channel/pair with |g|^2 <= 2 delta-hat
    ch2 = next(c for c in pk.enumerate_channels(desk)
               if c.delta_I_hat is not None and c.delta_I_hat > 0)
    small = make_pair([1e-3, 0, 0], [0.0, 0, 0], 1.0, 2.0)
    assert caseIII_post_state(small, ch2, np.array([1.0, 0, 0])) is None


def test_caseIII_conservation_property(desk):
    rng = np.random.default_rng(5)
    chans = [c for c in pk.enumerate_channels(desk) if c.alpha == 0 and c.beta == 1]
    worst = 0.0
    for _ in range(300):
        ch = chans[rng.integers(0, len(chans))]
        pair = make_pair(rng.normal(size=3) * 2, rng.normal(size=3) * 2, 1.0, 2.0)
        om = rng.normal(size=3)
        om /= np.linalg.norm(om)
        post = caseIII_post_state(pair, ch, om)
        if post is None:
            continue
        sa, sb = desk.species[0], desk.species[1]
        # pairing (xi, xi_*') pre at (i, l) vs (xi', xi_*) post at (k, j)
        mom, en = conservation_residuals(
            1.0, 2.0, pair.xi, post.xi_star_prime, post.xi_prime, pair.xi_star,
            e_int_pre=sa.levels[ch.i] + sb.levels[ch.l],
            e_int_post=sa.levels[ch.k] + sb.levels[ch.j])
        scale = 3.0 * (1.0 + pair.g_norm**2 + float(np.sum(pair.G**2)))
        worst = max(worst, float(np.max(np.abs(mom))) / scale, abs(en) / scale)
    assert worst < 1e-12


def test_caseIII_pairing_channel(desk):
    ch = _channel(desk, 0, 1, 0, 1, 1, 0)
    pc = caseIII_pairing_channel(desk, ch)
    sa, sb = desk.species[0], desk.species[1]
    assert pc.delta_I == pytest.approx(
        sa.levels[ch.k] + sb.levels[ch.j] - sa.levels[ch.i] - sb.levels[ch.l])


def test_caseIII_equal_mass_shift_and_conservation(eqm):
    rng = np.random.default_rng(6)
    chans = pk.enumerate_channels(eqm)
    sa_all = eqm.species
    worst = 0.0
    n_open = 0
    for _ in range(300):
        ch = chans[rng.integers(0, len(chans))]
        pair = make_pair(rng.normal(size=3) * 2, rng.normal(size=3) * 2, 1.5, 1.5)
        if pair.g_norm < 1e-6:
            continue
        n = pair.g / pair.g_norm
        w = rng.normal(size=3)
        w -= (w @ n) * n
        post = caseIII_equal_mass_post_state(pair, eqm, ch, w)
        if post is None:
            continue
        n_open += 1
        shift1 = post.xi_prime - pair.xi
        shift2 = post.xi_star_prime - pair.xi_star
        np.testing.assert_allclose(shift1, shift2, atol=1e-13)
        sa, sb = sa_all[ch.alpha], sa_all[ch.beta]
        mom, en = conservation_residuals(
            1.5, 1.5, pair.xi, post.xi_star_prime, post.xi_prime, pair.xi_star,
            e_int_pre=sa.levels[ch.i] + sb.levels[ch.l],
            e_int_post=sa.levels[ch.k] + sb.levels[ch.j])
        scale = 3.0 * (1.0 + pair.g_norm**2 + float(np.sum(pair.G**2)))
        worst = max(worst, float(np.max(np.abs(mom))) / scale, abs(en) / scale)
    assert n_open > 100
    assert worst < 1e-12


def test_caseIII_equal_mass_identity(eqm):
    ch = _channel(eqm, 0, 1, 0, 0, 0, 0)
    pair = make_pair([0.5, 0.5, 0], [-0.5, 0.2, 0.3], 1.5, 1.5)
    post = caseIII_equal_mass_post_state(pair, eqm, ch, np.zeros(3))
    np.testing.assert_allclose(post.xi_prime, pair.xi, atol=1e-14)
    np.testing.assert_allclose(post.xi_star_prime, pair.xi_star, atol=1e-14)


def test_case_routes_reject_wrong_masses(desk, eqm):
    ch = _channel(desk, 0, 0, 0, 0, 0, 0)
    pair_eq = make_pair([1.0, 0, 0], [0.0, 1.0, 0], 1.0, 1.0)
    with pytest.raises(ValueError, match="unequal"):
        caseIII_post_state(pair_eq, ch, np.array([1.0, 0, 0]))
    ch_d = _channel(desk, 0, 1, 0, 0, 0, 0)
    pair_neq = make_pair([1.0, 0, 0], [0.0, 1.0, 0], 1.0, 2.0)
    with pytest.raises(ValueError, match="equal"):
        caseIII_equal_mass_post_state(pair_neq, desk, ch_d, np.zeros(3))


def test_plane_basis_swap_invariant():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a, b = rng.normal(size=3), rng.normal(size=3)
        n1, e11, e21 = plane_basis(a, b)
        n2, e12, e22 = plane_basis(b, a)
        np.testing.assert_allclose(n1, -n2, atol=1e-15)
        np.testing.assert_array_equal(e11, e12)
        np.testing.assert_array_equal(e21, e22)
        # orthonormality
        assert abs(e11 @ n1) < 1e-14 and abs(e21 @ n1) < 1e-14
        assert abs(e11 @ e21) < 1e-14
        assert np.linalg.norm(e11) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Lemma 3

def test_lemma3_rho_values():
    assert lemma3_rho(1.0, 4.0) == ((np.sqrt(1.0) - np.sqrt(4.0))
                                    / (np.sqrt(1.0) + np.sqrt(4.0))) ** 2
    assert lemma3_rho(1.0, 4.0) == pytest.approx(1.0 / 9.0)
    assert lemma3_rho(1.0, 9.0) == pytest.approx(0.25)
    assert lemma3_rho(1.0, 1.0) == 0.0


def test_lemma3_rho_symmetric_scale_invariant():
    rng = np.random.default_rng(8)
    for _ in range(50):
        ma, mb = rng.uniform(0.1, 10, size=2)
        c = rng.uniform(0.1, 10)
        assert lemma3_rho(ma, mb) == pytest.approx(lemma3_rho(mb, ma), rel=1e-14)
        assert lemma3_rho(c * ma, c * mb) == pytest.approx(lemma3_rho(ma, mb),
                                                           rel=1e-12)


def test_lemma3_degenerate_q_zero():
    rng = np.random.default_rng(9)
    xi = rng.normal(size=(20, 3))
    aux = rng.normal(size=(20, 3))
    eta = rng.normal(size=(20, 3))
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    s = build_lemma3_sample(1.0, 4.0, xi, aux, eta, np.zeros(20), np.zeros(20))
    np.testing.assert_allclose(s.xi_prime, s.xi, atol=1e-15)
    rho = lemma3_rho(1.0, 4.0)
    sq = lambda v: np.sum(v * v, axis=-1)
    expected = (1 - rho) * (1.0 * sq(s.xi) + 4.0 * sq(s.xi_star))
    np.testing.assert_allclose(lemma3_gap(s), expected, rtol=1e-12)
    assert np.all(lemma3_gap(s) >= 0.0)


def test_lemma3_sample_satisfies_energy_relation():
    # (vrel3): m_a |xi|^2/2 + m_b |xi_*'|^2/2
    #        = m_a |xi'|^2/2 + m_b |xi_*|^2/2 + delta_I
    rng = np.random.default_rng(10)
    n = 500
    eta = rng.normal(size=(n, 3))
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    s = build_lemma3_sample(1.0, 4.0, rng.uniform(-5, 5, (n, 3)),
                            rng.uniform(-5, 5, (n, 3)), eta,
                            rng.uniform(0.01, 5.0, n), rng.uniform(-2, 2, n))
    sq = lambda v: np.sum(v * v, axis=-1)
    lhs = 0.5 * (1.0 * sq(s.xi) + 4.0 * sq(s.xi_star_prime))
    rhs = 0.5 * (1.0 * sq(s.xi_prime) + 4.0 * sq(s.xi_star)) + s.delta_I
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_lemma3_gap_randomized_nonnegative():
    rng = np.random.default_rng(11)
    n = 200000
    eta = rng.normal(size=(n, 3))
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    s = build_lemma3_sample(1.0, 4.0, rng.uniform(-5, 5, (n, 3)),
                            rng.uniform(-5, 5, (n, 3)), eta,
                            rng.uniform(1e-6, 5.0, n), rng.uniform(-2, 2, n))
    gaps = lemma3_gap(s)
    assert float(gaps.min()) >= -1e-12
    # the weaker -2|dI| bound is implied wherever the primary gap holds
    rho = lemma3_rho(1.0, 4.0)
    sq = lambda v: np.sum(v * v, axis=-1)
    weaker = (1.0 * sq(s.xi_prime) + 4.0 * sq(s.xi_star_prime)
              - rho * (1.0 * sq(s.xi) + 4.0 * sq(s.xi_star))
              + 2.0 * np.abs(s.delta_I))
    assert float(weaker.min()) >= -1e-12


def test_lemma3_gap_negative_control():
    rng = np.random.default_rng(12)
    n = 50000
    eta = rng.normal(size=(n, 3))
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    s = build_lemma3_sample(1.0, 4.0, rng.uniform(-5, 5, (n, 3)),
                            rng.uniform(-5, 5, (n, 3)), eta,
                            rng.uniform(1e-6, 5.0, n), rng.uniform(-2, 2, n))
    assert float(lemma3_gap(s, rho=1.0).min()) < 0.0
