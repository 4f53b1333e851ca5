"""Nonlinear collision operator Q, weak forms, entropy production, Gamma.

All operators are evaluated by the same sample set: velocity-grid midpoint
rule over xi_*, a sphere product rule over the post-collision direction
omega, and the channel sums.  Post velocities come from the omega
parametrization, so momentum and total energy are conserved per sample to
roundoff; that is what makes the Maxwellian cancellation and the invariant
brackets exact at the discrete level rather than up to quadrature error.

The coincident node xi_* = xi contributes zero (sigma is defined as 0 at
g = 0), which matches the integrable-singularity node skip used by the
kernel assembly.

Distribution providers are callables ``f(alpha, i, xi)`` broadcasting over
an arbitrary leading shape of ``xi``.
"""

from __future__ import annotations

import numpy as np

from .cross_sections import sigma_raw
from .grids import SphereQuadrature, VelocityGrid
from .mixture import EquilibriumParams, Mixture, maxwellian


class DomainError(ValueError):
    """Raised when an operation meets a value outside its domain."""


# ---------------------------------------------------------------------------
# distribution providers

class MaxwellianProvider:
    """Analytic equilibrium distribution for given (n, u, T)."""

    def __init__(self, mix: Mixture, params: EquilibriumParams):
        self.mix = mix
        self.params = params

    def __call__(self, alpha, i, xi):
        return maxwellian(self.mix, self.params, alpha, i, xi)


class SqrtMaxwellianWeighted:
    """Provider sqrt(M) * h at the linearization equilibrium (u=0, T=1)."""

    def __init__(self, mix: Mixture, h, params: EquilibriumParams | None = None):
        self.mix = mix
        self.params = params or mix.linearization_equilibrium()
        self.h = h

    def __call__(self, alpha, i, xi):
        return np.sqrt(maxwellian(self.mix, self.params, alpha, i, xi)) \
            * self.h(alpha, i, xi)


class LinearCombination:
    """c0 * f0 + c1 * f1 (used for perturbed equilibria in tests and demos)."""

    def __init__(self, terms):
        self.terms = list(terms)

    def __call__(self, alpha, i, xi):
        out = None
        for c, f in self.terms:
            v = c * f(alpha, i, xi)
            out = v if out is None else out + v
        return out


class GridField:
    """Grid-sampled distribution with trilinear interpolation, 0 outside."""

    def __init__(self, mix: Mixture, grid: VelocityGrid, values: np.ndarray):
        if values.shape != (mix.r, grid.size):
            raise ValueError("values must have shape (r, grid.size)")
        self.mix = mix
        self.grid = grid
        n = grid.points_per_axis
        self.cube = values.reshape(mix.r, n, n, n)

    def __call__(self, alpha, i, xi):
        mix, grid = self.mix, self.grid
        cube = self.cube[mix.flat_index(alpha, i)]
        n, h = grid.points_per_axis, grid.step
        xi = np.asarray(xi, dtype=float)
        t = (xi + grid.half_width) / h - 0.5
        i0 = np.floor(t).astype(int)
        frac = t - i0
        out = np.zeros(xi.shape[:-1])
        for corner in range(8):
            dx, dy, dz = (corner >> 2) & 1, (corner >> 1) & 1, corner & 1
            idx = i0 + np.array([dx, dy, dz])
            good = np.all((idx >= 0) & (idx < n), axis=-1)
            ic = np.clip(idx, 0, n - 1)
            wgt = (np.where(dx, frac[..., 0], 1 - frac[..., 0])
                   * np.where(dy, frac[..., 1], 1 - frac[..., 1])
                   * np.where(dz, frac[..., 2], 1 - frac[..., 2]))
            out = out + np.where(good, wgt * cube[ic[..., 0], ic[..., 1], ic[..., 2]], 0.0)
        return out


class InvariantProvider:
    """The t-th collision invariant as a provider (order: e_1..e_s, momentum, energy)."""

    def __init__(self, mix: Mixture, which: int):
        if not (0 <= which < mix.s + 4):
            raise ValueError(f"invariant index {which} out of range")
        self.mix = mix
        self.which = which

    def __call__(self, alpha, i, xi):
        xi = np.asarray(xi, dtype=float)
        w = self.which
        mix = self.mix
        if w < mix.s:
            return np.full(xi.shape[:-1], 1.0 if alpha == w else 0.0)
        m = mix.species[alpha].mass
        if w < mix.s + 3:
            return m * xi[..., w - mix.s]
        return m * np.sum(xi * xi, axis=-1) + 2.0 * mix.species[alpha].levels[i]


def invariant_providers(mix: Mixture) -> list:
    return [InvariantProvider(mix, t) for t in range(mix.s + 4)]


def sample_on_grid(f, mix: Mixture, grid: VelocityGrid) -> np.ndarray:
    """Evaluate a provider at every (level, node): shape (r, grid.size)."""
    out = np.empty((mix.r, grid.size))
    for alpha, i in mix.level_pairs():
        out[mix.flat_index(alpha, i)] = f(alpha, i, grid.nodes)
    return out


# ---------------------------------------------------------------------------
# channel iteration helpers

def _gain_channels(mix: Mixture, alpha: int, i: int):
    """Tuples (beta, k, j, l) entering Q_i^alpha, with weights and gap."""
    sa = mix.species[alpha]
    for beta, sb in enumerate(mix.species):
        tilde = (sa.mass + sb.mass) / (sa.mass * sb.mass)
        for k in range(sa.n_levels):
            for j in range(sb.n_levels):
                for l in range(sb.n_levels):
                    d = sa.levels[k] + sb.levels[l] - sa.levels[i] - sb.levels[j]
                    yield (beta, k, j, l, tilde * d,
                           sa.weights[i], sb.weights[j], sa.weights[k], sb.weights[l])


def _post_velocities(ma, mb, G, gn, d_tilde, omega):
    """Omega-parametrized post velocities for arrays of pairs; closed -> gp=0."""
    disc = gn * gn - 2.0 * d_tilde
    open_ = disc > 0.0
    gp = np.sqrt(np.where(open_, disc, 0.0))
    gpv = gp[..., None] * omega
    xi_p = G + (mb / (ma + mb)) * gpv
    xi_sp = G - (ma / (ma + mb)) * gpv
    return xi_p, xi_sp, open_


# ---------------------------------------------------------------------------
# the collision operator

def q_collision_field(f, mix: Mixture, model, grid: VelocityGrid,
                      squad: SphereQuadrature, outputs=None, chunk: int = 512,
                      return_loss: bool = False, f2=None):
    """Q_i^alpha(f, f) at grid nodes; shape (r, grid.size).

    With ``f2`` given, evaluates the symmetric bilinear extension
    Q(f, f2) = 1/2 [Q(f + f2) - Q(f) - Q(f2)] sample-by-sample (exact
    bilinearity on the shared sample set).  ``return_loss`` additionally
    returns the accumulated magnitude of the loss term, the natural scale
    for cancellation tests.
    """
    nodes = grid.nodes
    M = grid.size
    out_rows = list(mix.level_pairs()) if outputs is None else list(outputs)
    Q = np.zeros((len(out_rows), M))
    loss_mag = np.zeros((len(out_rows), M))
    f_on_grid = {}

    def grid_vals(beta, j):
        if (beta, j) not in f_on_grid:
            f_on_grid[(beta, j)] = f(beta, j, nodes)
        return f_on_grid[(beta, j)]

    f2_on_grid = {}

    def grid_vals2(beta, j):
        if f2 is None:
            return grid_vals(beta, j)
        if (beta, j) not in f2_on_grid:
            f2_on_grid[(beta, j)] = f2(beta, j, nodes)
        return f2_on_grid[(beta, j)]

    for row, (alpha, i) in enumerate(out_rows):
        ma = mix.species[alpha].mass
        for start in range(0, M, chunk):
            sl = slice(start, min(start + chunk, M))
            xi_out = nodes[sl]
            C = xi_out.shape[0]
            fi_out = f(alpha, i, xi_out)
            f2i_out = fi_out if f2 is None else f2(alpha, i, xi_out)
            for (beta, k, j, l, d_tilde, phi_i, phi_j, phi_k, phi_l) in \
                    _gain_channels(mix, alpha, i):
                mb = mix.species[beta].mass
                gvec = xi_out[:, None, :] - nodes[None, :, :]
                gn = np.linalg.norm(gvec, axis=-1)
                sig = sigma_raw(model, alpha, beta, phi_i, phi_j, d_tilde, gn)
                pref = sig * gn                       # (C, M); 0 on closed/coincident
                if not np.any(pref):
                    continue
                G = (ma * xi_out[:, None, :] + mb * nodes[None, :, :]) / (ma + mb)
                ratio = (phi_i * phi_j) / (phi_k * phi_l)
                loss = 0.5 * (np.multiply.outer(fi_out, grid_vals2(beta, j))
                              + np.multiply.outer(f2i_out, grid_vals(beta, j)))
                acc = np.zeros((C, M))
                for wq, om in zip(squad.weights, squad.nodes):
                    xi_p, xi_sp, _ = _post_velocities(ma, mb, G, gn, d_tilde, om)
                    if f2 is None:
                        gain = f(alpha, k, xi_p) * f(beta, l, xi_sp)
                    else:
                        gain = 0.5 * (f(alpha, k, xi_p) * f2(beta, l, xi_sp)
                                      + f2(alpha, k, xi_p) * f(beta, l, xi_sp))
                    acc += wq * (ratio * gain - loss)
                Q[row, sl] += grid.weight * np.sum(pref * acc, axis=1)
                loss_mag[row, sl] += grid.weight * 4.0 * np.pi \
                    * np.sum(pref * np.abs(loss), axis=1)
    if return_loss:
        return Q, loss_mag
    return Q


def q_collision(f, mix: Mixture, model, grid: VelocityGrid, squad: SphereQuadrature,
                alpha: int, i: int, xi) -> float:
    """Q_i^alpha(f, f)(xi) at a single velocity."""
    xi = np.asarray(xi, dtype=float)
    nodes = grid.nodes
    total = 0.0
    fi = float(f(alpha, i, xi[None, :])[0])
    ma = mix.species[alpha].mass
    for (beta, k, j, l, d_tilde, phi_i, phi_j, phi_k, phi_l) in \
            _gain_channels(mix, alpha, i):
        mb = mix.species[beta].mass
        gvec = xi[None, :] - nodes
        gn = np.linalg.norm(gvec, axis=-1)
        sig = sigma_raw(model, alpha, beta, phi_i, phi_j, d_tilde, gn)
        pref = sig * gn
        if not np.any(pref):
            continue
        G = (ma * xi[None, :] + mb * nodes) / (ma + mb)
        loss = fi * f(beta, j, nodes)
        ratio = (phi_i * phi_j) / (phi_k * phi_l)
        acc = np.zeros(grid.size)
        for wq, om in zip(squad.weights, squad.nodes):
            xi_p, xi_sp, _ = _post_velocities(ma, mb, G, gn, d_tilde, om)
            acc += wq * (ratio * f(alpha, k, xi_p) * f(beta, l, xi_sp) - loss)
        total += grid.weight * float(np.sum(pref * acc))
    return total


def apply_linearized(h, mix: Mixture, model, grid: VelocityGrid,
                     squad: SphereQuadrature) -> np.ndarray:
    """L h = -M^{-1/2} [Q(M, sqrt(M) h) + Q(sqrt(M) h, M)] on the grid.

    Uses the same collision quadrature as q_collision_field, so the
    linearization ties to Q(f, f) by exact discrete bilinearity.
    """
    params = mix.linearization_equilibrium()
    m_prov = MaxwellianProvider(mix, params)
    mh_prov = SqrtMaxwellianWeighted(mix, h, params)
    bil = q_collision_field(m_prov, mix, model, grid, squad, f2=mh_prov)
    from .mixture import maxwellian_field
    sqrt_m = np.sqrt(maxwellian_field(mix, params, grid))
    return -2.0 * bil / sqrt_m


def gamma_field(h, mix: Mixture, model, grid: VelocityGrid,
                squad: SphereQuadrature) -> np.ndarray:
    """Quadratic term Gamma(h, h) = M^{-1/2} Q(sqrt(M) h, sqrt(M) h)."""
    params = mix.linearization_equilibrium()
    f = SqrtMaxwellianWeighted(mix, h, params)
    q = q_collision_field(f, mix, model, grid, squad)
    from .mixture import maxwellian_field
    sqrt_m = np.sqrt(maxwellian_field(mix, params, grid))
    return q / sqrt_m


# ---------------------------------------------------------------------------
# weak forms

def _bracket_channels(mix: Mixture):
    """Tuples (alpha, beta, i, k, j, l) of the full weak-form sum."""
    for alpha, sa in enumerate(mix.species):
        for beta, sb in enumerate(mix.species):
            tilde = (sa.mass + sb.mass) / (sa.mass * sb.mass)
            for i in range(sa.n_levels):
                for k in range(sa.n_levels):
                    for j in range(sb.n_levels):
                        for l in range(sb.n_levels):
                            d = sa.levels[k] + sb.levels[l] \
                                - sa.levels[i] - sb.levels[j]
                            yield (alpha, beta, i, k, j, l, tilde * d,
                                   sa.weights[i], sb.weights[j],
                                   sa.weights[k], sb.weights[l])


def weak_bracket_many(f, g_list, mix: Mixture, model, grid: VelocityGrid,
                      squad: SphereQuadrature):
    """Symmetrized weak form (Q(f,f), g) for several test functions at once.

    Returns (values, scales): value = 1/4 sum of P * Delta(g) over the
    shared sample set, scale = 1/4 sum of |P| * (sum of |g| entries), the
    magnitude against which a vanishing bracket is judged.
    """
    nodes = grid.nodes
    n_g = len(g_list)
    vals = np.zeros(n_g)
    scales = np.zeros(n_g)
    w2 = grid.weight**2
    f_cache = {}

    def f_at_nodes(beta, j):
        if (beta, j) not in f_cache:
            f_cache[(beta, j)] = f(beta, j, nodes)
        return f_cache[(beta, j)]

    g_cache = [{} for _ in g_list]

    def g_at_nodes(t, beta, j):
        if (beta, j) not in g_cache[t]:
            g_cache[t][(beta, j)] = g_list[t](beta, j, nodes)
        return g_cache[t][(beta, j)]

    for (alpha, beta, i, k, j, l, d_tilde, phi_i, phi_j, phi_k, phi_l) in \
            _bracket_channels(mix):
        ma, mb = mix.species[alpha].mass, mix.species[beta].mass
        gvec = nodes[:, None, :] - nodes[None, :, :]
        gn = np.linalg.norm(gvec, axis=-1)
        sig = sigma_raw(model, alpha, beta, phi_i, phi_j, d_tilde, gn)
        pref = sig * gn
        if not np.any(pref):
            continue
        G = (ma * nodes[:, None, :] + mb * nodes[None, :, :]) / (ma + mb)
        ratio = (phi_i * phi_j) / (phi_k * phi_l)
        loss = np.multiply.outer(f_at_nodes(alpha, i), f_at_nodes(beta, j))
        g_pre = [np.add.outer(g_at_nodes(t, alpha, i), g_at_nodes(t, beta, j))
                 for t in range(n_g)]
        for wq, om in zip(squad.weights, squad.nodes):
            xi_p, xi_sp, _ = _post_velocities(ma, mb, G, gn, d_tilde, om)
            P = pref * (ratio * f(alpha, k, xi_p) * f(beta, l, xi_sp) - loss) \
                * (w2 * wq)
            for t in range(n_g):
                g_post_k = g_list[t](alpha, k, xi_p)
                g_post_l = g_list[t](beta, l, xi_sp)
                delta = g_pre[t] - g_post_k - g_post_l
                vals[t] += 0.25 * float(np.sum(P * delta))
                scales[t] += 0.25 * float(np.sum(
                    np.abs(P) * (np.abs(g_pre[t]) + np.abs(g_post_k)
                                 + np.abs(g_post_l))))
    return vals, scales


def weak_bracket(f, g, mix: Mixture, model, grid: VelocityGrid,
                 squad: SphereQuadrature) -> float:
    """Symmetrized weak form (Q(f,f), g); exactly zero for invariants."""
    vals, _ = weak_bracket_many(f, [g], mix, model, grid, squad)
    return float(vals[0])


def inner_product(mix: Mixture, grid: VelocityGrid, a: np.ndarray,
                  b: np.ndarray) -> float:
    """Grid L^2 inner product of two (r, grid.size) fields."""
    return grid.weight * float(np.sum(a * b))


def entropy_production(f, mix: Mixture, model, grid: VelocityGrid,
                       squad: SphereQuadrature, return_scale: bool = False):
    """W[f] = (Q(f,f), log(phi^{-1} f)), evaluated in the symmetrized form.

    Every sample contributes -c (x - 1) log x with c >= 0, so the discrete
    result is nonpositive by construction.  Requires f > 0 wherever it is
    evaluated; a nonpositive value raises DomainError naming the point.
    With ``return_scale`` the collision-mass magnitude sum of
    weight * sigma |g| f_i f_j* is returned alongside, the natural scale
    against which a vanishing production (Maxwellian input) is judged.
    """
    nodes = grid.nodes

    def checked(alpha, i, xi):
        v = f(alpha, i, xi)
        if np.any(v <= 0.0):
            bad = np.unravel_index(int(np.argmin(v)), np.shape(v))
            where = np.asarray(xi)[bad]
            raise DomainError(
                f"entropy_production needs f > 0; got {v[bad]:g} at "
                f"(alpha={alpha}, i={i}, xi={where})")
        return v

    total = 0.0
    scale = 0.0
    w2 = grid.weight**2
    cache = {}

    def at_nodes(beta, j):
        if (beta, j) not in cache:
            cache[(beta, j)] = checked(beta, j, nodes)
        return cache[(beta, j)]

    for (alpha, beta, i, k, j, l, d_tilde, phi_i, phi_j, phi_k, phi_l) in \
            _bracket_channels(mix):
        ma, mb = mix.species[alpha].mass, mix.species[beta].mass
        gvec = nodes[:, None, :] - nodes[None, :, :]
        gn = np.linalg.norm(gvec, axis=-1)
        sig = sigma_raw(model, alpha, beta, phi_i, phi_j, d_tilde, gn)
        pref = sig * gn
        if not np.any(pref):
            continue
        G = (ma * nodes[:, None, :] + mb * nodes[None, :, :]) / (ma + mb)
        ff = np.multiply.outer(at_nodes(alpha, i), at_nodes(beta, j))
        for wq, om in zip(squad.weights, squad.nodes):
            xi_p, xi_sp, open_ = _post_velocities(ma, mb, G, gn, d_tilde, om)
            live = open_ & (pref > 0)
            if not np.any(live):
                continue
            x = np.ones_like(ff)
            gain = checked(alpha, k, xi_p) * checked(beta, l, xi_sp)
            np.divide((phi_i * phi_j) * gain, (phi_k * phi_l) * ff,
                      out=x, where=live)
            term = pref * ff * (x - 1.0) * np.log(x)
            total -= 0.25 * w2 * wq * float(np.sum(term))
            scale += 0.25 * w2 * wq * float(np.sum(pref * ff))
    if return_scale:
        return total, max(scale, 1e-300)
    return total
