"""Collision frequency, kernel families, and dense operator assembly.

The linearized operator splits as L = Lambda - K.  Lambda multiplies by
the collision frequency nu_{alpha,i}(|xi|); K is an integral operator
whose kernel decomposes into three families:

* ``kernel_k1`` - loss route, post-direction integral over S^2;
* ``kernel_k3`` - gain route with xi_* of the same species as xi,
  an integral over the plane orthogonal to g;
* ``kernel_k2`` - gain route with xi_* of the other species, an S^2
  integral for disparate masses and a plane integral for equal masses.

Each family has a quadrature path valid for any isotropic cross-section
model and a closed form for the hard-sphere family, where sigma is
proportional to |g_post|/|g_pre| so the Jacobian factors cancel and the
remaining Gaussian integrals are elementary (the S^2 one via sinh(z)/z).
Assembly uses the closed forms for hard spheres by default.

Geometry conventions, used by all block functions (vectorized over a
flat pair axis): n = g/|g|, x = xi.n, y = xi_*.n; both velocities share
the perpendicular part p.  Plane quadratures are centered at -p, which
makes |p + w| equal the radial coordinate, and the plane basis depends
only on the unordered velocity pair, so kernel swap symmetry holds at
machine precision for the quadrature paths as well.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .cross_sections import HardSphere, pair_constant, sigma_raw
from .grids import PlaneQuadrature, VelocityGrid, build_plane_quadrature, gauss_legendre
from .kinematics import plane_basis
from .mixture import Mixture, partition_function

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi


def level_norm(mix: Mixture, alpha: int) -> float:
    """n_a m_a^{3/2} / ((2 pi)^{3/2} q_a): Maxwellian prefactor at u=0, T=1."""
    sp = mix.species[alpha]
    return sp.density * sp.mass**1.5 / (TWO_PI**1.5 * partition_function(mix, alpha, 1.0))


def default_plane_quadrature(mix: Mixture, n_radial: int = 24,
                             n_angular: int = 16, cutoff: float | None = None
                             ) -> PlaneQuadrature:
    if cutoff is None:
        cutoff = 7.0 / np.sqrt(float(np.min(mix.masses)))
    return build_plane_quadrature(n_radial, n_angular, cutoff)


# ---------------------------------------------------------------------------
# collision frequency

def _nu_inner_hs(C_over_phi, theta, v, r):
    """(1/(v r)) int G^2 sigma_ang dG over the open range, hard sphere.

    sigma_ang = 4 pi C sqrt(G^2 - theta) / (G phi_i phi_j); the G integral
    is exact: int G sqrt(G^2 - theta) dG = (G^2 - theta)^{3/2} / 3.
    """
    hi = np.maximum((v + r) ** 2 - theta, 0.0) ** 1.5
    lo = np.maximum((v - r) ** 2 - theta, 0.0) ** 1.5
    return FOUR_PI * C_over_phi * (hi - lo) / (3.0 * v * r)


def _nu_inner_grad(model, phi_ij, theta, v, r, n_sub: int = 32):
    """Same reduced integral for the Grad-bounded family, by quadrature.

    Substituting G^2 = theta + tau^2 on the open part makes the endpoint
    square roots polynomial in tau, so plain Gauss-Legendre converges.
    """
    t_lo = np.sqrt(np.maximum((v - r) ** 2 - theta, 0.0))
    t_hi = np.sqrt(np.maximum((v + r) ** 2 - theta, 0.0))
    width = t_hi - t_lo
    out = np.zeros_like(r)
    mask = width > 0
    if not np.any(mask):
        return out
    xg, wg = np.polynomial.legendre.leggauss(n_sub)
    for xk, wk in zip(xg, wg):
        tau = t_lo + (xk + 1.0) * 0.5 * width
        G = np.sqrt(theta + tau * tau)
        psi_v = G * tau
        sig_g2 = model.C * (psi_v + psi_v ** (0.5 * model.gamma)) / phi_ij
        out += wk * 0.5 * width * FOUR_PI * sig_g2 * tau / np.maximum(G, 1e-300)
    return np.where(mask, out / (v * r), 0.0)


def nu(mix: Mixture, model, alpha: int, i: int, speed, n_radial: int = 64,
       r_cut: float | None = None):
    """Collision frequency nu_{alpha,i}(|xi|); vectorized over speed.

    Rotational symmetry reduces the xi_* integral to (radius, relative
    speed).  The relative-speed integral is exact for hard spheres and
    sub-quadratured for the Grad family; radial panels split at the
    channel thresholds so every panel integrand is smooth.
    """
    v_arr = np.atleast_1d(np.asarray(speed, dtype=float))
    out = np.zeros_like(v_arr)
    sa = mix.species[alpha]
    for beta, sb in enumerate(mix.species):
        mb = sb.mass
        cut = r_cut if r_cut is not None else 8.0 / np.sqrt(mb)
        tilde = (sa.mass + mb) / (sa.mass * mb)
        c_beta = TWO_PI * level_norm(mix, beta)
        C_ab = pair_constant(model, alpha, beta)
        for k in range(sa.n_levels):
            for j in range(sb.n_levels):
                phi_ij = sa.weights[i] * sb.weights[j]
                lvl_j = sb.weights[j] * np.exp(-sb.levels[j])
                for l in range(sb.n_levels):
                    d = sa.levels[k] + sb.levels[l] - sa.levels[i] - sb.levels[j]
                    theta = 2.0 * tilde * d
                    for idx, vv in enumerate(v_arr):
                        pts = {0.0, cut}
                        if 0.0 < vv < cut:
                            pts.add(vv)
                        if theta > 0:
                            rt = np.sqrt(theta)
                            for p in (vv - rt, vv + rt, rt - vv):
                                if 0.0 < p < cut:
                                    pts.add(p)
                        pts = sorted(pts)
                        total = 0.0
                        for a0, b0 in zip(pts[:-1], pts[1:]):
                            if b0 - a0 <= 1e-14:
                                continue
                            r_nodes, r_w = gauss_legendre(n_radial, a0, b0)
                            if vv > 1e-13:
                                if isinstance(model, HardSphere):
                                    inner = _nu_inner_hs(C_ab / phi_ij, theta,
                                                         vv, r_nodes)
                                else:
                                    inner = _nu_inner_grad(model, phi_ij, theta,
                                                           vv, r_nodes)
                            else:
                                disc = np.maximum(r_nodes**2 - theta, 0.0)
                                if isinstance(model, HardSphere):
                                    inner = 2.0 * FOUR_PI * C_ab * np.sqrt(disc) / phi_ij
                                else:
                                    psi_v = r_nodes * np.sqrt(disc)
                                    inner = np.where(
                                        disc > 0,
                                        2.0 * FOUR_PI * model.C
                                        * (psi_v + psi_v ** (0.5 * model.gamma))
                                        / (r_nodes**2 * phi_ij),
                                        0.0)
                            total += float(np.sum(
                                r_w * r_nodes**2
                                * np.exp(-mb * r_nodes**2 / 2.0) * inner))
                        out[idx] += c_beta * lvl_j * total
    return out if np.ndim(speed) else float(out[0])


def nu_field(mix: Mixture, model, grid: VelocityGrid) -> np.ndarray:
    """nu at every (level, node), deduplicating repeated grid speeds."""
    uniq, inverse = np.unique(grid.speeds, return_inverse=True)
    out = np.empty((mix.r, grid.size))
    for alpha, i in mix.level_pairs():
        vals = nu(mix, model, alpha, i, uniq)
        out[mix.flat_index(alpha, i)] = vals[inverse]
    return out


# ---------------------------------------------------------------------------
# pair geometry shared by the kernel block functions

def _pair_geometry(xi, xi_star):
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    xi_star = np.atleast_2d(np.asarray(xi_star, dtype=float))
    g = xi - xi_star
    gn = np.linalg.norm(g, axis=-1)
    ok = gn > 0
    safe_xi = np.where(ok[..., None], xi, xi + np.array([1.0, 0.0, 0.0]))
    n, e1, e2 = plane_basis(safe_xi, xi_star)
    gns = np.where(ok, gn, 1.0)
    x = np.sum(xi * n, axis=-1)
    y = np.sum(xi_star * n, axis=-1)
    p = xi - x[..., None] * n                    # shared perpendicular part
    p1 = np.sum(p * e1, axis=-1)
    p2 = np.sum(p * e2, axis=-1)
    pn2 = p1 * p1 + p2 * p2
    return xi, xi_star, gn, gns, ok, x, y, p1, p2, pn2


# ---------------------------------------------------------------------------
# k1: loss-route kernel (closed form for any isotropic model)

def k1_block(mix: Mixture, model, alpha: int, beta: int, i: int, j: int,
             xi, xi_star) -> np.ndarray:
    """k^{(beta,1)}_{ab,ij}(xi, xi_*) on pair arrays; zero at coincidence."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    xi_star = np.atleast_2d(np.asarray(xi_star, dtype=float))
    sa, sb = mix.species[alpha], mix.species[beta]
    gn = np.linalg.norm(xi - xi_star, axis=-1)
    tilde = (sa.mass + sb.mass) / (sa.mass * sb.mass)
    root_m = np.sqrt(
        level_norm(mix, alpha) * level_norm(mix, beta)
        * sa.weights[i] * sb.weights[j]
        * np.exp(-sa.levels[i] - sb.levels[j]))
    gauss = np.exp(-(sa.mass * np.sum(xi**2, -1)
                     + sb.mass * np.sum(xi_star**2, -1)) / 4.0)
    sig_sum = np.zeros_like(gn)
    for k in range(sa.n_levels):
        for l in range(sb.n_levels):
            d_tilde = tilde * (sa.levels[k] + sb.levels[l]
                               - sa.levels[i] - sb.levels[j])
            sig_sum += sigma_raw(model, alpha, beta, sa.weights[i], sb.weights[j],
                                 d_tilde, gn)
    return root_m * gauss * gn * FOUR_PI * sig_sum


# ---------------------------------------------------------------------------
# k3: same-species gain kernel (w-plane integral)

def _k3_channel_terms(mix: Mixture, alpha: int, beta: int, i: int, j: int):
    """(k, l, D) with D = pre minus post internal energy of the collision."""
    sa, sb = mix.species[alpha], mix.species[beta]
    for k in range(sb.n_levels):
        for l in range(sb.n_levels):
            yield k, l, sa.levels[i] + sb.levels[k] - sa.levels[j] - sb.levels[l]


def k3_block(mix: Mixture, model, alpha: int, beta: int, i: int, j: int,
             xi, xi_star, pquad: PlaneQuadrature | None = None,
             method: str = "auto") -> np.ndarray:
    """k^{(alpha)}_{ab,ij}(xi, xi_*); i, j are levels of species alpha."""
    if method == "auto":
        method = "analytic" if isinstance(model, HardSphere) else "quad"
    sa, sb = mix.species[alpha], mix.species[beta]
    ma, mb = sa.mass, sb.mass
    _, _, gn, gns, ok, x, y, p1, p2, pn2 = _pair_geometry(xi, xi_star)
    kappa = (ma - mb) / (2.0 * mb)
    tilde = (ma + mb) / (ma * mb)
    pref = (ma + mb) ** 2 / mb**2 * level_norm(mix, beta)
    total = np.zeros_like(gn)

    if method == "analytic":
        if not isinstance(model, HardSphere):
            raise ValueError("analytic k3 requires the hard-sphere model")
        C_ab = pair_constant(model, alpha, beta)
        for k, l, d in _k3_channel_terms(mix, alpha, beta, i, j):
            chi_m = d / (ma * gns) - kappa * gns
            chi_p = d / (ma * gns) + kappa * gns
            total += np.exp(-mb * ((y + chi_m) ** 2 + (x + chi_p) ** 2) / 4.0
                            - (sb.levels[k] + sb.levels[l]) / 2.0)
        val = pref / np.sqrt(sa.weights[i] * sa.weights[j]) \
            * C_ab / gns * (TWO_PI / mb) * total
        return np.where(ok, val, 0.0)

    if pquad is None:
        pquad = default_plane_quadrature(mix)
    cos_t, sin_t = np.cos(pquad.angles), np.sin(pquad.angles)
    for k, l, d in _k3_channel_terms(mix, alpha, beta, i, j):
        chi_m = d / (ma * gns) - kappa * gns
        chi_p = d / (ma * gns) + kappa * gns
        chan_fac = np.sqrt(sb.weights[k] * sb.weights[l]
                           * sa.weights[i] * sb.weights[k]
                           / (sa.weights[j] * sb.weights[l])) \
            * np.exp(-(sb.levels[k] + sb.levels[l]) / 2.0)
        d_tilde_rev = -tilde * d                 # gap seen by sigma_{ik,jl}
        a_m = gns - chi_m                        # axial part of g-tilde
        a_p = gns + chi_p                        # axial part of g_*
        ex_ch = -mb * ((y + chi_m) ** 2 + (x + chi_p) ** 2) / 4.0
        chan = np.zeros_like(gn)
        for ir, r in enumerate(pquad.r_nodes):
            gauss_r = np.exp(ex_ch - mb * r * r / 2.0)
            for it in range(pquad.n_angular):
                w2 = r * r + pn2 - 2.0 * r * (p1 * cos_t[it] + p2 * sin_t[it])
                gt = np.sqrt(a_m * a_m + w2)
                gs = np.sqrt(np.maximum(a_p * a_p + w2, 1e-300))
                cos_scatt = (w2 - a_m * a_p) / np.maximum(gt * gs, 1e-300)
                sig = sigma_raw(model, alpha, beta, sa.weights[i], sb.weights[k],
                                d_tilde_rev, gt, cos_scatt)
                chan += pquad.weights[ir, it] * gt / (gs * gns) * gauss_r * sig
        total += chan_fac * chan
    return np.where(ok, pref * total, 0.0)


# ---------------------------------------------------------------------------
# k2: cross-species gain kernel

def _k2_channel_terms(mix: Mixture, alpha: int, beta: int, i: int, j: int):
    """(k, l, d_il_kj) with d the gap of the pairing pre (i, l) -> post (k, j)."""
    sa, sb = mix.species[alpha], mix.species[beta]
    for k in range(sa.n_levels):
        for l in range(sb.n_levels):
            yield k, l, sa.levels[i] + sb.levels[l] - sa.levels[k] - sb.levels[j]


def _orthonormal_frame(axis):
    """Deterministic orthonormal pair completing the unit vectors ``axis``."""
    idx = np.argmin(np.abs(axis), axis=-1)
    e_axis = np.eye(3)[idx]
    a = e_axis - np.sum(e_axis * axis, axis=-1, keepdims=True) * axis
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    return a, np.cross(axis, a)


def k2_block(mix: Mixture, model, alpha: int, beta: int, i: int, j: int,
             xi, xi_star, pquad: PlaneQuadrature | None = None,
             method: str = "auto", n_polar: int = 16, n_azimuth: int = 16
             ) -> np.ndarray:
    """k^{(beta,2)}_{ab,ij}(xi, xi_*); i a level of alpha, j of beta."""
    if method == "auto":
        method = "analytic" if isinstance(model, HardSphere) else "quad"
    if mix.species[alpha].mass == mix.species[beta].mass:
        return _k2_equal_mass_block(mix, model, alpha, beta, i, j, xi, xi_star,
                                    pquad, method)
    return _k2_disparate_block(mix, model, alpha, beta, i, j, xi, xi_star,
                               method, n_polar, n_azimuth)


def _k2_disparate_block(mix, model, alpha, beta, i, j, xi, xi_star, method,
                        n_polar, n_azimuth):
    sa, sb = mix.species[alpha], mix.species[beta]
    ma, mb = sa.mass, sb.mass
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    xi_star = np.atleast_2d(np.asarray(xi_star, dtype=float))
    gn = np.linalg.norm(xi - xi_star, axis=-1)
    ok = gn > 0
    dm = ma - mb
    G2v = (ma * xi - mb * xi_star) / dm
    G2n = np.linalg.norm(G2v, axis=-1)
    hat = dm / (ma * mb)
    mass_pref = (ma + mb) ** 2 / dm**2
    c2 = ma * mb * (ma + mb) / dm**2
    kappa_abs = abs(2.0 * ma * mb / dm)
    norm_ab = np.sqrt(level_norm(mix, alpha) * level_norm(mix, beta))
    total = np.zeros_like(gn)

    if method == "analytic":
        if not isinstance(model, HardSphere):
            raise ValueError("analytic k2 requires the hard-sphere model")
        C_ab = pair_constant(model, alpha, beta)
        for k, l, d_il_kj in _k2_channel_terms(mix, alpha, beta, i, j):
            disc = gn * gn - 2.0 * hat * d_il_kj
            open_ = disc > 0
            gp = np.sqrt(np.where(open_, disc, 0.0))
            z = kappa_abs * gp * G2n / 2.0
            zs = np.maximum(z, 1e-30)
            sinh_fac = np.where(z < 1e-8, 1.0 + z * z / 6.0,
                                -np.expm1(-2.0 * zs) / (2.0 * zs))
            expo = z - ((ma + mb) * G2n**2 + c2 * gp * gp) / 4.0 \
                - (sa.levels[k] + sb.levels[l]) / 2.0
            total += np.where(open_, FOUR_PI * C_ab * gp * np.exp(expo) * sinh_fac,
                              0.0)
        val = mass_pref * norm_ab / np.sqrt(sa.weights[i] * sb.weights[j]) * total
        return np.where(ok, val, 0.0)

    # quadrature path: exp-tilted polar rule about the G2 axis
    G2n_safe = np.maximum(G2n, 1e-300)
    axis = np.where((G2n > 0)[..., None], G2v / G2n_safe[..., None],
                    np.array([0.0, 0.0, 1.0]))
    if 2.0 * ma * mb / dm < 0:
        axis = -axis
    fa, fb = _orthonormal_frame(axis)
    pg, wg = np.polynomial.legendre.leggauss(n_polar)
    pg, wg = 0.5 * (pg + 1.0), 0.5 * wg
    phis = TWO_PI * (np.arange(n_azimuth) + 0.5) / n_azimuth
    for k, l, d_il_kj in _k2_channel_terms(mix, alpha, beta, i, j):
        disc = gn * gn - 2.0 * hat * d_il_kj
        open_ = disc > 0
        gp = np.sqrt(np.where(open_, disc, 0.0))
        z = kappa_abs * gp * G2n / 2.0
        zs = np.maximum(z, 1e-300)
        em2z = np.exp(-2.0 * z)
        jac = np.where(z < 1e-12, 2.0, -np.expm1(-2.0 * zs) / zs)
        chan_fac = np.sqrt(sa.weights[k] * sb.weights[l]
                           * sa.weights[i] * sb.weights[l]
                           / (sa.weights[k] * sb.weights[j])) \
            * np.exp(-(sa.levels[k] + sb.levels[l]) / 2.0)
        tilde_kj_il = -(ma + mb) / (ma * mb) * d_il_kj
        chan = np.zeros_like(gn)
        for pk, wk in zip(pg, wg):
            u = np.where(z < 1e-12, 2.0 * pk - 1.0,
                         1.0 + np.log1p(pk * (em2z - 1.0)) / zs)
            su = np.sqrt(np.maximum(1.0 - u * u, 0.0))
            for ph in phis:
                om = (u[..., None] * axis
                      + su[..., None] * (np.cos(ph) * fa + np.sin(ph) * fb))
                gpv = gp[..., None] * om
                xi_p = G2v - (mb / dm) * gpv
                xi_sp = G2v - (ma / dm) * gpv
                ghat = xi_sp - xi
                gbar = xi_star - xi_p
                ghn = np.linalg.norm(ghat, axis=-1)
                gbn = np.linalg.norm(gbar, axis=-1)
                cos_scatt = np.sum(ghat * gbar, axis=-1) \
                    / np.maximum(ghn * gbn, 1e-300)
                sig = sigma_raw(model, alpha, beta, sa.weights[i], sb.weights[l],
                                tilde_kj_il, ghn, cos_scatt)
                expo = -(ma * np.sum(xi_p**2, -1)
                         + mb * np.sum(xi_sp**2, -1)) / 4.0 + z * (1.0 - u)
                val = ghn * gp / np.maximum(gbn, 1e-300) * sig * np.exp(expo)
                chan += wk * (TWO_PI / n_azimuth) * jac * np.where(open_, val, 0.0)
        total += chan_fac * chan
    return np.where(ok, mass_pref * norm_ab * total, 0.0)


def _k2_equal_mass_block(mix, model, alpha, beta, i, j, xi, xi_star, pquad,
                         method):
    sa, sb = mix.species[alpha], mix.species[beta]
    m = sa.mass
    _, _, gn, gns, ok, x, y, p1, p2, pn2 = _pair_geometry(xi, xi_star)
    norm_ab = np.sqrt(level_norm(mix, alpha) * level_norm(mix, beta))
    total = np.zeros_like(gn)

    if method == "analytic":
        if not isinstance(model, HardSphere):
            raise ValueError("analytic k2 requires the hard-sphere model")
        C_ab = pair_constant(model, alpha, beta)
        for k, l, d_il_kj in _k2_channel_terms(mix, alpha, beta, i, j):
            chi = -d_il_kj / (m * gns)           # Delta I_{kj,il} / (m |g|)
            total += np.exp(-m * ((x - chi) ** 2 + (y - chi) ** 2) / 4.0
                            - (sa.levels[k] + sb.levels[l]) / 2.0)
        val = 4.0 * C_ab / gns * norm_ab \
            / np.sqrt(sa.weights[i] * sb.weights[j]) * (TWO_PI / m) * total
        return np.where(ok, val, 0.0)

    if pquad is None:
        pquad = default_plane_quadrature(mix)
    cos_t, sin_t = np.cos(pquad.angles), np.sin(pquad.angles)
    for k, l, d_il_kj in _k2_channel_terms(mix, alpha, beta, i, j):
        d_kj_il = -d_il_kj
        chi = d_kj_il / (m * gns)
        chan_fac = np.sqrt(sa.weights[k] * sb.weights[l]
                           * sa.weights[i] * sb.weights[l]
                           / (sa.weights[k] * sb.weights[j])) \
            * np.exp(-(sa.levels[k] + sb.levels[l]) / 2.0)
        tilde_kj_il = 2.0 * d_kj_il / m
        a_hat = gns + chi                        # axial part of g-hat
        a_bar = gns - chi                        # axial part of g-bar
        ex_ch = -m * ((x - chi) ** 2 + (y - chi) ** 2) / 4.0
        chan = np.zeros_like(gn)
        for ir, r in enumerate(pquad.r_nodes):
            gauss_r = np.exp(ex_ch - m * r * r / 2.0)
            for it in range(pquad.n_angular):
                w2 = r * r + pn2 - 2.0 * r * (p1 * cos_t[it] + p2 * sin_t[it])
                gh = np.sqrt(a_hat * a_hat + w2)
                gb = np.sqrt(np.maximum(a_bar * a_bar + w2, 1e-300))
                cos_scatt = (a_hat * a_bar - w2) / np.maximum(gh * gb, 1e-300)
                sig = sigma_raw(model, alpha, beta, sa.weights[i], sb.weights[l],
                                tilde_kj_il, gh, cos_scatt)
                chan += pquad.weights[ir, it] * gh / (gb * gns) * gauss_r * sig
        total += 4.0 * chan_fac * chan
    return np.where(ok, norm_ab * total, 0.0)


# ---------------------------------------------------------------------------
# scalar wrappers

def kernel_k1(mix, model, alpha, beta, i, j, xi, xi_star) -> float:
    v = k1_block(mix, model, alpha, beta, i, j,
                 np.asarray(xi, float)[None, :], np.asarray(xi_star, float)[None, :])
    return float(v[0])


def kernel_k3(mix, model, alpha, beta, i, j, xi, xi_star,
              pquad: PlaneQuadrature | None = None, method: str = "auto") -> float:
    v = k3_block(mix, model, alpha, beta, i, j,
                 np.asarray(xi, float)[None, :], np.asarray(xi_star, float)[None, :],
                 pquad=pquad, method=method)
    return float(v[0])


def kernel_k2(mix, model, alpha, beta, i, j, xi, xi_star,
              pquad: PlaneQuadrature | None = None, method: str = "auto",
              n_polar: int = 16, n_azimuth: int = 16) -> float:
    v = k2_block(mix, model, alpha, beta, i, j,
                 np.asarray(xi, float)[None, :], np.asarray(xi_star, float)[None, :],
                 pquad=pquad, method=method, n_polar=n_polar, n_azimuth=n_azimuth)
    return float(v[0])


def kernel_combination_block(mix: Mixture, model, alpha, i, gamma, j, xi, xi_star,
                             pquad=None, method="auto") -> np.ndarray:
    """The full K kernel entry coupling (alpha, i) rows to (gamma, j) columns:

    delta_{gamma,alpha} sum_beta k3_{alpha beta, ij}
        + k2_{alpha gamma, ij} - k1_{alpha gamma, ij}.
    """
    out = np.zeros(np.atleast_2d(xi).shape[0])
    if gamma == alpha:
        for beta in range(mix.s):
            out = out + k3_block(mix, model, alpha, beta, i, j, xi, xi_star,
                                 pquad, method)
    out = out + k2_block(mix, model, alpha, gamma, i, j, xi, xi_star, pquad, method)
    out = out - k1_block(mix, model, alpha, gamma, i, j, xi, xi_star)
    return out


# ---------------------------------------------------------------------------
# assembly

@dataclass
class DiagonalOperator:
    """Multiplication operator: nu per (level, node), plus the node speeds."""

    values: np.ndarray          # (r, grid.size)
    speeds: np.ndarray          # (grid.size,)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass
class BlockOperator:
    """Dense symmetric operator on the flat ((species, level), node) index."""

    matrix: np.ndarray
    n_levels: int
    n_nodes: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def row(self, level_flat: int, node: int) -> int:
        return level_flat * self.n_nodes + node


@dataclass
class AssembledOperators:
    lambda_op: DiagonalOperator
    K: BlockOperator
    L: BlockOperator
    asymmetry: float
    meta: dict = field(default_factory=dict)


def _diag_cell_corrections(mix: Mixture, model, grid: VelocityGrid, pquad,
                           method: str, n_polar: int = 6, n_azimuthal: int = 12,
                           n_radial: int = 8) -> np.ndarray:
    """Cell integrals of the kernel combination at coincident velocities.

    The kernels carry an integrable 1/|g| singularity, so the midpoint rule
    must not just drop the coincident cell: its mass is O(h^2) and acts as
    a spurious diagonal shift that wrecks the discrete null space.  The
    integral of the kernel over the cubic cell around each node is computed
    with a direction x radius rule (radius up to the cube boundary), which
    has no free parameter.  Entries come out symmetrized over the two
    block orientations.  Shape (r, r, grid.size).
    """
    from .grids import build_sphere_quadrature
    sq = build_sphere_quadrature(n_polar, n_azimuthal)
    rho = 0.5 * grid.step / np.max(np.abs(sq.nodes), axis=1)
    xg, wg = np.polynomial.legendre.leggauss(n_radial)
    rows = list(mix.level_pairs())
    out = np.zeros((mix.r, mix.r, grid.size))
    for om, wq, r_max in zip(sq.nodes, sq.weights, rho):
        for xk, wk in zip(xg, wg):
            r = 0.5 * r_max * (xk + 1.0)
            w_tot = wq * 0.5 * r_max * wk * r * r
            xis = grid.nodes + r * om
            for ra, (alpha, i) in enumerate(rows):
                for rb, (gamma, j) in enumerate(rows):
                    if rb < ra:
                        continue
                    vals = kernel_combination_block(mix, model, alpha, i,
                                                    gamma, j, grid.nodes, xis,
                                                    pquad, method)
                    out[ra, rb] += w_tot * vals
                    if rb != ra:
                        out[rb, ra] += w_tot * kernel_combination_block(
                            mix, model, gamma, j, alpha, i, grid.nodes, xis,
                            pquad, method)
    return 0.5 * (out + out.transpose(1, 0, 2))


def assemble(mix: Mixture, model, grid: VelocityGrid,
             pquad: PlaneQuadrature | None = None, method: str = "auto",
             entry_cap: float = 1e8, workers: int = 1,
             row_chunk: int = 128, diagonal: str = "cell") -> AssembledOperators:
    """Assemble Lambda, K and L = Lambda - K as dense operators.

    Every K entry is h^3 times the kernel combination at the node pair.
    Coincident-velocity entries are handled per ``diagonal``: "cell"
    (default) integrates the kernel over the coincident cell, "zero" drops
    it (the literal node-skip; its O(h^2) defect inflates the near-null
    eigenvalues several-fold at desk resolutions).  K is measured for
    asymmetry on the off-diagonal quadrature, then symmetrized as
    (K + K^T)/2.  Rows are processed in fixed chunks, so the result is
    bitwise independent of the worker count.
    """
    dim = mix.r * grid.size
    if float(dim) * dim > entry_cap:
        raise MemoryError(
            f"dense assembly needs {float(dim) * dim:.3e} entries "
            f"({float(dim) * dim * 8 / 2**20:.0f} MiB), above the cap "
            f"{entry_cap:.3e}; raise the cap or shrink the grid")
    if pquad is None:
        pquad = default_plane_quadrature(mix)
    M = grid.size
    K = np.zeros((dim, dim))
    rows = list(mix.level_pairs())

    def fill_rows(chunk_start: int, chunk_stop: int):
        xi_chunk = grid.nodes[chunk_start:chunk_stop]
        C = xi_chunk.shape[0]
        pairs_xi = np.repeat(xi_chunk, M, axis=0)
        pairs_xis = np.tile(grid.nodes, (C, 1))
        local = np.arange(C)
        diag_cols = np.arange(chunk_start, chunk_stop)
        for ra, (alpha, i) in enumerate(rows):
            for rb, (gamma, j) in enumerate(rows):
                blk = kernel_combination_block(
                    mix, model, alpha, i, gamma, j, pairs_xi, pairs_xis,
                    pquad, method).reshape(C, M) * grid.weight
                blk[local, diag_cols] = 0.0
                K[ra * M + chunk_start:ra * M + chunk_stop,
                  rb * M:(rb + 1) * M] = blk

    chunks = [(s, min(s + row_chunk, M)) for s in range(0, M, row_chunk)]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(lambda c: fill_rows(*c), chunks))
    else:
        for c in chunks:
            fill_rows(*c)

    asymmetry = float(np.linalg.norm(K - K.T)) / max(float(np.linalg.norm(K)), 1e-300)
    K = 0.5 * (K + K.T)

    if diagonal == "cell":
        corr = _diag_cell_corrections(mix, model, grid, pquad, method)
        nodes_idx = np.arange(M)
        for ra in range(mix.r):
            for rb in range(mix.r):
                K[ra * M + nodes_idx, rb * M + nodes_idx] = corr[ra, rb]
    elif diagonal != "zero":
        raise ValueError("diagonal must be 'cell' or 'zero'")

    lam = DiagonalOperator(values=nu_field(mix, model, grid), speeds=grid.speeds)
    L = -K
    L[np.arange(dim), np.arange(dim)] += lam.flat()
    return AssembledOperators(
        lambda_op=lam,
        K=BlockOperator(K, mix.r, M),
        L=BlockOperator(L, mix.r, M),
        asymmetry=asymmetry,
        meta={"dim": dim, "N": grid.points_per_axis, "R": grid.half_width,
              "method": method, "diagonal": diagonal},
    )


def hs_norm_k1_quadrature(mix: Mixture, model, grid: VelocityGrid) -> float:
    """Grid estimate of the summed double integral of (k^{(beta,1)})^2.

    Coincident-velocity pairs are skipped, consistent with assembly.
    """
    total = 0.0
    M = grid.size
    eye = np.arange(M)
    for alpha, sa in enumerate(mix.species):
        for beta, sb in enumerate(mix.species):
            for i in range(sa.n_levels):
                for j in range(sb.n_levels):
                    for start in range(0, M, 256):
                        stop = min(start + 256, M)
                        xi = np.repeat(grid.nodes[start:stop], M, axis=0)
                        xis = np.tile(grid.nodes, (stop - start, 1))
                        vals = k1_block(mix, model, alpha, beta, i, j, xi, xis)
                        vals = vals.reshape(stop - start, M)
                        vals[np.arange(stop - start), eye[start:stop]] = 0.0
                        total += float(np.sum(vals**2)) * grid.weight**2
    return total


# ---------------------------------------------------------------------------
# binary operator dumps

MAGIC = b"PKOP"
KINDS = {"lambda": 0, "K": 1, "L": 2}
KIND_NAMES = {v: k for k, v in KINDS.items()}


def dump_operator(path, kind: str, matrix: np.ndarray) -> None:
    """Write a dense dump: magic PKOP, u32 version=1, u64 dim, u8 kind, f64s."""
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    mat = np.ascontiguousarray(matrix, dtype="<f8")
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("operator dump requires a square matrix")
    header = MAGIC + struct.pack("<IQB", 1, mat.shape[0], KINDS[kind])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(mat.tobytes())


def load_operator(path) -> tuple[str, np.ndarray]:
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC) + 13)
        if head[:4] != MAGIC:
            raise ValueError(f"{path}: bad magic, not an operator dump")
        version, dim, kind = struct.unpack("<IQB", head[4:])
        if version != 1:
            raise ValueError(f"{path}: unsupported dump version {version}")
        if kind not in KIND_NAMES:
            raise ValueError(f"{path}: unknown operator kind {kind}")
        data = np.frombuffer(fh.read(dim * dim * 8), dtype="<f8")
        if data.size != dim * dim:
            raise ValueError(f"{path}: truncated dump")
    return KIND_NAMES[kind], data.reshape(dim, dim).copy()
