"""Collision kinematics: conservation laws and the collision parametrizations.

Four ways to parametrize an admissible collision appear in the operator
reductions and each one is implemented here:

* ``omega_post_state``   - post velocities from a unit vector along g'
  (the representation under the collision operator itself);
* ``caseII_post_state``  - from a vector w orthogonal to n = g/|g|
  (the same-species gain route);
* ``caseIII_post_state`` - from a unit vector along g' for disparate
  masses (the cross-species gain route);
* ``caseIII_equal_mass_post_state`` - its equal-mass degeneration, again
  w-parametrized.

Closed channels (the energy threshold fails) are values, not errors:
scalar ops return None, batch ops return an open mask.  All batch
functions broadcast over a leading sample axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import CollisionChannel, Mixture


@dataclass(frozen=True)
class CollisionPair:
    """Pre-collision velocities with the derived relative/center quantities."""

    xi: np.ndarray
    xi_star: np.ndarray
    m_alpha: float
    m_beta: float
    g: np.ndarray
    g_norm: np.ndarray
    G: np.ndarray


@dataclass(frozen=True)
class PostState:
    """Post-collision velocities; g_prime_norm is the post relative speed."""

    xi_prime: np.ndarray
    xi_star_prime: np.ndarray
    g_prime_norm: np.ndarray


def make_pair(xi, xi_star, m_alpha: float, m_beta: float) -> CollisionPair:
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    g = xi - xi_star
    return CollisionPair(
        xi=xi, xi_star=xi_star, m_alpha=float(m_alpha), m_beta=float(m_beta),
        g=g, g_norm=np.linalg.norm(g, axis=-1),
        G=(m_alpha * xi + m_beta * xi_star) / (m_alpha + m_beta),
    )


def _check_unit(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if np.any(np.abs(np.linalg.norm(omega, axis=-1) - 1.0) > 1e-12):
        raise ValueError("omega must be a unit vector")
    return omega


def conservation_residuals(m_a, m_b, pre_a, pre_b, post_a, post_b,
                           e_int_pre=0.0, e_int_post=0.0):
    """Momentum and total-energy residuals of a candidate collision.

    Energy convention matches the invariant basis: kinetic part m |xi|^2,
    internal part 2 I.  Returns (momentum (..., 3), energy (...)).
    """
    pre_a, pre_b = np.asarray(pre_a, float), np.asarray(pre_b, float)
    post_a, post_b = np.asarray(post_a, float), np.asarray(post_b, float)
    mom = m_a * pre_a + m_b * pre_b - m_a * post_a - m_b * post_b
    sq = lambda v: np.sum(v * v, axis=-1)
    en = (m_a * sq(pre_a) + m_b * sq(pre_b) + 2.0 * e_int_pre
          - m_a * sq(post_a) - m_b * sq(post_b) - 2.0 * e_int_post)
    return mom, en


def check_conservation(mix: Mixture, ch: CollisionChannel, pair: CollisionPair,
                       post: PostState):
    """Residuals for the direct pairing pre=(xi, xi_*)@(i,j), post@(k,l)."""
    sa, sb = mix.species[ch.alpha], mix.species[ch.beta]
    return conservation_residuals(
        pair.m_alpha, pair.m_beta, pair.xi, pair.xi_star,
        post.xi_prime, post.xi_star_prime,
        e_int_pre=sa.levels[ch.i] + sb.levels[ch.j],
        e_int_post=sa.levels[ch.k] + sb.levels[ch.l],
    )


# ---------------------------------------------------------------------------
# omega representation (collision-operator form)

def omega_post_batch(pair: CollisionPair, d_tilde: float, omega: np.ndarray):
    """Vectorized omega parametrization; returns (xi', xi*', |g'|, open mask)."""
    ma, mb = pair.m_alpha, pair.m_beta
    disc = pair.g_norm**2 - 2.0 * d_tilde
    open_ = disc > 0.0
    gp = np.sqrt(np.where(open_, disc, 0.0))
    gpv = gp[..., None] * omega
    xi_p = pair.G + (mb / (ma + mb)) * gpv
    xi_sp = pair.G - (ma / (ma + mb)) * gpv
    return xi_p, xi_sp, gp, open_


def omega_post_state(pair: CollisionPair, ch: CollisionChannel,
                     omega) -> PostState | None:
    """Post state from the unit vector omega = g'/|g'|; None when closed."""
    omega = _check_unit(omega)
    xi_p, xi_sp, gp, open_ = omega_post_batch(pair, ch.delta_I_tilde, omega)
    if not np.all(open_):
        return None
    return PostState(xi_p, xi_sp, gp)


# ---------------------------------------------------------------------------
# swap-symmetric basis of the plane orthogonal to g

def _lex_le(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Componentwise lexicographic a <= b, vectorized over leading axes."""
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return (ax < bx) | ((ax == bx) & ((ay < by) | ((ay == by) & (az <= bz))))


def plane_basis(xi, xi_star):
    """Orthonormal (n, e1, e2) with n along xi - xi_star.

    e1, e2 span the plane orthogonal to g and depend only on the unordered
    pair {xi, xi_star}: the reference direction is taken from the
    lexicographically smaller endpoint toward the larger one, and e1 is the
    least-aligned coordinate axis orthogonalized against it.  This makes
    w-plane quadrature node sets identical under argument swap, which is
    what gives machine-precision kernel symmetry.
    """
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    g = xi - xi_star
    gn = np.linalg.norm(g, axis=-1, keepdims=True)
    if np.any(gn == 0.0):
        raise ValueError("plane_basis requires xi != xi_star")
    swap = _lex_le(xi_star, xi)          # reference runs smaller -> larger
    n0 = np.where(swap[..., None], -g, g) / gn
    axis_idx = np.argmin(np.abs(n0), axis=-1)
    e_axis = np.eye(3)[axis_idx]
    e1 = e_axis - np.sum(e_axis * n0, axis=-1, keepdims=True) * n0
    e1 = e1 / np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(n0, e1)
    n = g / gn
    return n, e1, e2


# ---------------------------------------------------------------------------
# case II: w-parametrized same-species gain collision
#   pre (xi @ alpha level i, xi' @ beta level j) -> post (xi_* @ alpha k, xi_*' @ beta l)

def caseII_post_batch(pair: CollisionPair, mix: Mixture, ch: CollisionChannel,
                      w: np.ndarray, n: np.ndarray | None = None):
    """Vectorized case-II reconstruction; returns (xi', xi*', |g_post|, open)."""
    ma, mb = pair.m_alpha, pair.m_beta
    g = pair.g_norm
    if n is None:
        n = pair.g / g[..., None]
    d_pre_minus_post = -ch.delta_I
    chi_m = d_pre_minus_post / (ma * g) - (ma - mb) / (2.0 * mb) * g
    chi_p = d_pre_minus_post / (ma * g) + (ma - mb) / (2.0 * mb) * g
    xi_p = pair.xi_star + w + chi_m[..., None] * n
    xi_sp = pair.xi + w + chi_p[..., None] * n
    g_tilde = pair.xi - xi_p
    open_ = np.sum(g_tilde * g_tilde, axis=-1) > 2.0 * ch.delta_I_tilde
    g_post = np.linalg.norm(pair.xi_star - xi_sp, axis=-1)
    return xi_p, xi_sp, g_post, open_


def caseII_post_state(pair: CollisionPair, mix: Mixture, ch: CollisionChannel,
                      w) -> PostState | None:
    """Post state of the section-4 case-II collision; None when closed.

    The constructed collision pairs (xi, xi') against (xi_*, xi_*'), with
    species-alpha levels (i, k) at (xi, xi_*) and species-beta levels
    (j, l) at (xi', xi_*').  Conservation holds for exactly that pairing.
    """
    w = np.asarray(w, dtype=float)
    if np.any(pair.g_norm == 0.0):
        raise ValueError("caseII requires xi != xi_star")
    n = pair.g / pair.g_norm
    wn = abs(float(np.dot(w, n)))
    if wn > 1e-12 * max(float(np.linalg.norm(w)), 1.0):
        raise ValueError("w must be orthogonal to n = g/|g|")
    xi_p, xi_sp, g_post, open_ = caseII_post_batch(pair, mix, ch, w, n)
    if not np.all(open_):
        return None
    return PostState(xi_p, xi_sp, g_post)


# ---------------------------------------------------------------------------
# case III: omega-parametrized cross-species gain collision, disparate masses
#   pre (xi @ alpha i, xi_*' @ beta l) -> post (xi' @ alpha k, xi_* @ beta j)

def caseIII_post_batch(pair: CollisionPair, d_hat: float, omega: np.ndarray):
    ma, mb = pair.m_alpha, pair.m_beta
    disc = pair.g_norm**2 - 2.0 * d_hat
    open_ = disc > 0.0
    gp = np.sqrt(np.where(open_, disc, 0.0))
    g_ab = (ma * pair.xi - mb * pair.xi_star) / (ma - mb)
    gpv = gp[..., None] * omega
    xi_p = g_ab - (mb / (ma - mb)) * gpv
    xi_sp = g_ab - (ma / (ma - mb)) * gpv
    return xi_p, xi_sp, gp, open_


def caseIII_post_state(pair: CollisionPair, ch: CollisionChannel,
                       omega) -> PostState | None:
    """Disparate-mass case-III post state; conserves for (xi, xi_*' | xi', xi_*)."""
    if pair.m_alpha == pair.m_beta:
        raise ValueError("caseIII_post_state requires unequal masses")
    omega = _check_unit(omega)
    assert ch.delta_I_hat is not None
    xi_p, xi_sp, gp, open_ = caseIII_post_batch(pair, ch.delta_I_hat, omega)
    if not np.all(open_):
        return None
    return PostState(xi_p, xi_sp, gp)


def caseIII_pairing_channel(mix: Mixture, ch: CollisionChannel) -> CollisionChannel:
    """Channel describing the case-III pairing pre (i, l) -> post (k, j)."""
    sa, sb = mix.species[ch.alpha], mix.species[ch.beta]
    ma, mb = sa.mass, sb.mass
    d = sa.levels[ch.k] + sb.levels[ch.j] - sa.levels[ch.i] - sb.levels[ch.l]
    return CollisionChannel(
        alpha=ch.alpha, beta=ch.beta, i=ch.i, j=ch.l, k=ch.k, l=ch.j,
        delta_I=d, delta_I_tilde=(ma + mb) / (ma * mb) * d,
        delta_I_hat=None if ma == mb else (ma - mb) / (ma * mb) * d,
    )


# ---------------------------------------------------------------------------
# case III, equal masses: both velocities shifted by w - chi * n
#   pre (xi @ alpha i, xi_*' @ beta l) -> post (xi' @ alpha k, xi_* @ beta j)

def caseIII_equal_mass_post_batch(pair: CollisionPair, mix: Mixture,
                                  ch: CollisionChannel, w: np.ndarray,
                                  n: np.ndarray | None = None):
    m = pair.m_alpha
    g = pair.g_norm
    if n is None:
        n = pair.g / g[..., None]
    sa, sb = mix.species[ch.alpha], mix.species[ch.beta]
    d_kj_il = sa.levels[ch.k] + sb.levels[ch.j] - sa.levels[ch.i] - sb.levels[ch.l]
    chi = d_kj_il / (m * g)
    shift = w - chi[..., None] * n
    xi_p = pair.xi + shift
    xi_sp = pair.xi_star + shift
    g_hat = pair.xi - xi_sp
    open_ = np.sum(g_hat * g_hat, axis=-1) > 4.0 * d_kj_il / m
    g_post = np.linalg.norm(xi_p - pair.xi_star, axis=-1)
    return xi_p, xi_sp, g_post, open_


def caseIII_equal_mass_post_state(pair: CollisionPair, mix: Mixture,
                                  ch: CollisionChannel, w) -> PostState | None:
    """Equal-mass case-III post state; conserves for (xi, xi_*' | xi', xi_*)."""
    if pair.m_alpha != pair.m_beta:
        raise ValueError("caseIII_equal_mass_post_state requires equal masses")
    w = np.asarray(w, dtype=float)
    if np.any(pair.g_norm == 0.0):
        raise ValueError("caseIII equal-mass requires xi != xi_star")
    n = pair.g / pair.g_norm
    if abs(float(np.dot(w, n))) > 1e-12 * max(float(np.linalg.norm(w)), 1.0):
        raise ValueError("w must be orthogonal to n = g/|g|")
    xi_p, xi_sp, g_post, open_ = caseIII_equal_mass_post_batch(pair, mix, ch, w, n)
    if not np.all(open_):
        return None
    return PostState(xi_p, xi_sp, g_post)


# ---------------------------------------------------------------------------
# Lemma 3: the quantitative energy transfer bound for disparate masses

def lemma3_rho(m_alpha: float, m_beta: float) -> float:
    """rho = ((sqrt(ma) - sqrt(mb)) / (sqrt(ma) + sqrt(mb)))^2; 0 iff equal."""
    if m_alpha <= 0 or m_beta <= 0:
        raise ValueError("masses must be positive")
    sa, sb = np.sqrt(m_alpha), np.sqrt(m_beta)
    return float(((sa - sb) / (sa + sb)) ** 2)


@dataclass(frozen=True)
class Lemma3Sample:
    """One collision built from the appendix decomposition.

    xi = w + r eta, xi' = w + (r - q) eta; xi_* and xi_*' share the
    perpendicular part w_tilde, with the axial coordinate r_* forced by
    total energy conservation.
    """

    m_alpha: float
    m_beta: float
    eta: np.ndarray
    q: np.ndarray
    delta_I: np.ndarray
    xi: np.ndarray
    xi_star: np.ndarray
    xi_prime: np.ndarray
    xi_star_prime: np.ndarray


def build_lemma3_sample(m_alpha: float, m_beta: float, xi, w_tilde_source, eta,
                        q, delta_I) -> Lemma3Sample:
    """Assemble a Lemma 3 sample; broadcasts over a leading sample axis.

    ``delta_I`` is the gap Delta I_{kj,il}; it must vanish wherever q = 0
    (the decomposition divides by q).
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    q = np.asarray(q, dtype=float)
    delta_I = np.asarray(delta_I, dtype=float)
    if np.any(q < 0):
        raise ValueError("q = |xi - xi'| must be nonnegative")
    if np.any((q == 0) & (delta_I != 0)):
        raise ValueError("q = 0 requires delta_I = 0")
    r = np.sum(xi * eta, axis=-1)
    w = xi - r[..., None] * eta
    wt_src = np.asarray(w_tilde_source, dtype=float)
    w_tilde = wt_src - np.sum(wt_src * eta, axis=-1, keepdims=True) * eta
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = np.where(q > 0, delta_I / (m_alpha * np.where(q > 0, q, 1.0)), 0.0)
    r_star = r - chi + (m_alpha - m_beta) / (2.0 * m_beta) * q
    xi_prime = w + (r - q)[..., None] * eta
    xi_star = w_tilde + r_star[..., None] * eta
    xi_star_prime = w_tilde + (r_star - (m_alpha / m_beta) * q)[..., None] * eta
    return Lemma3Sample(m_alpha=float(m_alpha), m_beta=float(m_beta), eta=eta, q=q,
                        delta_I=delta_I, xi=xi, xi_star=xi_star, xi_prime=xi_prime,
                        xi_star_prime=xi_star_prime)


def lemma3_gap(sample: Lemma3Sample, rho: float | None = None):
    """m_a|xi'|^2 + m_b|xi_*'|^2 - rho (m_a|xi|^2 + m_b|xi_*|^2) - (1+rho) c dI.

    With the closed-form rho this is nonnegative for every admissible
    sample; passing another rho (e.g. 1.0) is the negative control.
    """
    ma, mb = sample.m_alpha, sample.m_beta
    if rho is None:
        rho = lemma3_rho(ma, mb)
    sq = lambda v: np.sum(v * v, axis=-1)
    post = ma * sq(sample.xi_prime) + mb * sq(sample.xi_star_prime)
    pre = ma * sq(sample.xi) + mb * sq(sample.xi_star)
    return post - rho * pre - (1.0 + rho) * (ma - mb) / (ma + mb) * sample.delta_I
