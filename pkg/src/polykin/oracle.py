"""Monte Carlo oracles: independent estimators for every quadrature result.

Each estimator is an unbiased importance-sampled version of the integral
its deterministic counterpart computes, so agreement within a few standard
errors validates both paths.  Reproducibility contract: streams come from
counter-based Philox generators keyed by (seed, fixed-size chunk index),
and reduction runs over chunks in index order, so results are bitwise
identical across runs and worker counts.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cross_sections import sigma_raw
from .kinematics import build_lemma3_sample, lemma3_gap, plane_basis
from .linops import level_norm
from .mixture import Mixture, partition_function

CHUNK = 1 << 16


@dataclass(frozen=True)
class McConfig:
    """Sample budget and seed; chunking is fixed internally."""

    samples: int = 100_000
    seed: int = 0x5EED
    workers: int = 1

    def __post_init__(self):
        if self.samples < 10_000:
            raise ValueError("mc samples must be at least 10^4")


@dataclass(frozen=True)
class McResult:
    estimate: float
    stderr: float
    samples: int
    seed: int

    def z_score(self, reference: float, scale: float | None = None) -> float:
        """Standardized deviation from a reference value.

        With zero variance the z-score is 0 when the difference is
        negligible against ``scale`` (default |reference|), else infinite.
        """
        diff = self.estimate - reference
        if self.stderr > 0.0:
            return diff / self.stderr
        s = abs(reference) if scale is None else scale
        return 0.0 if abs(diff) <= 1e-12 * max(s, 1e-300) else float("inf")


def _chunk_rng(seed: int, tag: str, chunk_idx: int) -> np.random.Generator:
    word = (np.uint64(zlib.crc32(tag.encode()) & 0xFFFFFFFF) << np.uint64(32)) \
        | np.uint64(chunk_idx)
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), word], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _mc_reduce(cfg: McConfig, tag: str, sample_fn) -> McResult:
    """Chunked mean/stderr reduction; sample_fn(rng, n) -> (n,) values."""
    n_total = int(cfg.samples)
    bounds = [(s, min(s + CHUNK, n_total)) for s in range(0, n_total, CHUNK)]

    def run(idx_lo):
        idx, (lo, hi) = idx_lo
        vals = sample_fn(_chunk_rng(cfg.seed, tag, idx), hi - lo)
        return idx, float(np.sum(vals)), float(np.sum(vals * vals))

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(run, enumerate(bounds)))
    else:
        parts = [run(p) for p in enumerate(bounds)]
    parts.sort(key=lambda t: t[0])
    s1 = 0.0
    s2 = 0.0
    for _, a, b in parts:
        s1 += a
        s2 += b
    mean = s1 / n_total
    var = max(s2 - n_total * mean * mean, 0.0) / max(n_total - 1, 1)
    return McResult(estimate=mean, stderr=float(np.sqrt(var / n_total)),
                    samples=n_total, seed=cfg.seed)


def _uniform_sphere(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# collision frequency

def mc_nu(mix: Mixture, model, alpha: int, i: int, speed: float,
          cfg: McConfig) -> McResult:
    """nu by importance sampling xi_* from each species' own Gaussian."""
    sa = mix.species[alpha]
    xi = np.array([0.0, 0.0, float(speed)])
    consts = []
    for beta, sb in enumerate(mix.species):
        tilde = (sa.mass + sb.mass) / (sa.mass * sb.mass)
        q_b = partition_function(mix, beta, 1.0)
        for k in range(sa.n_levels):
            for j in range(sb.n_levels):
                for l in range(sb.n_levels):
                    d_tilde = tilde * (sa.levels[k] + sb.levels[l]
                                       - sa.levels[i] - sb.levels[j])
                    ratio = sb.density * sb.weights[j] * np.exp(-sb.levels[j]) / q_b
                    consts.append((beta, sb.mass, k, j, l, d_tilde, ratio,
                                   sa.weights[i], sb.weights[j]))

    def sample(rng, n):
        draws = {}
        for beta, sb in enumerate(mix.species):
            draws[beta] = rng.normal(size=(n, 3)) / np.sqrt(sb.mass)
        vals = np.zeros(n)
        for beta, mb, k, j, l, d_tilde, ratio, phi_i, phi_j in consts:
            gn = np.linalg.norm(xi[None, :] - draws[beta], axis=1)
            sig = sigma_raw(model, alpha, beta, phi_i, phi_j, d_tilde, gn)
            vals += ratio * 4.0 * np.pi * sig * gn
        return vals

    return _mc_reduce(cfg, f"nu:{alpha}:{i}:{speed}", sample)


# ---------------------------------------------------------------------------
# kernels

def mc_kernel_k1(mix: Mixture, model, alpha, beta, i, j, xi, xi_star,
                 cfg: McConfig) -> McResult:
    """k^{(beta,1)} by uniform post-direction sampling on S^2."""
    sa, sb = mix.species[alpha], mix.species[beta]
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    g = xi - xi_star
    gn = float(np.linalg.norm(g))
    ghat = g / gn
    tilde = (sa.mass + sb.mass) / (sa.mass * sb.mass)
    root_m = np.sqrt(level_norm(mix, alpha) * level_norm(mix, beta)
                     * sa.weights[i] * sb.weights[j]
                     * np.exp(-sa.levels[i] - sb.levels[j]))
    gauss = np.exp(-(sa.mass * np.sum(xi**2) + sb.mass * np.sum(xi_star**2)) / 4.0)
    gaps = [tilde * (sa.levels[k] + sb.levels[l] - sa.levels[i] - sb.levels[j])
            for k in range(sa.n_levels) for l in range(sb.n_levels)]

    def sample(rng, n):
        om = _uniform_sphere(rng, n)
        cos_t = om @ ghat
        tot = np.zeros(n)
        for d_tilde in gaps:
            tot += sigma_raw(model, alpha, beta, sa.weights[i], sb.weights[j],
                             d_tilde, gn, cos_t)
        return root_m * gauss * gn * 4.0 * np.pi * tot

    return _mc_reduce(cfg, f"k1:{alpha}:{beta}:{i}:{j}", sample)


def _plane_frame(xi, xi_star):
    n, e1, e2 = plane_basis(xi[None, :], xi_star[None, :])
    return n[0], e1[0], e2[0]


def mc_kernel_k3(mix: Mixture, model, alpha, beta, i, j, xi, xi_star,
                 cfg: McConfig) -> McResult:
    """k^{(alpha)} by Gaussian importance sampling in the w-plane."""
    sa, sb = mix.species[alpha], mix.species[beta]
    ma, mb = sa.mass, sb.mass
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    n, e1, e2 = _plane_frame(xi, xi_star)
    gn = float(np.linalg.norm(xi - xi_star))
    x = float(xi @ n)
    y = float(xi_star @ n)
    p = xi - x * n
    p1, p2 = float(p @ e1), float(p @ e2)
    pn2 = p1 * p1 + p2 * p2
    kappa = (ma - mb) / (2.0 * mb)
    tilde = (ma + mb) / (ma * mb)
    pref = (ma + mb) ** 2 / mb**2 * level_norm(mix, beta)
    terms = []
    for k in range(sb.n_levels):
        for l in range(sb.n_levels):
            d = sa.levels[i] + sb.levels[k] - sa.levels[j] - sb.levels[l]
            chi_m = d / (ma * gn) - kappa * gn
            chi_p = d / (ma * gn) + kappa * gn
            chan_fac = np.sqrt(sb.weights[k] * sb.weights[l]
                               * sa.weights[i] * sb.weights[k]
                               / (sa.weights[j] * sb.weights[l])) \
                * np.exp(-(sb.levels[k] + sb.levels[l]) / 2.0)
            terms.append((k, chi_m, chi_p, chan_fac, -tilde * d))

    def sample(rng, nn):
        delta = rng.normal(size=(nn, 2)) / np.sqrt(mb)
        r2 = np.sum(delta**2, axis=1)
        w2 = pn2 + r2 - 2.0 * (p1 * delta[:, 0] + p2 * delta[:, 1])
        inv_pdf = (2.0 * np.pi / mb) * np.exp(mb * r2 / 2.0)
        tot = np.zeros(nn)
        for k, chi_m, chi_p, chan_fac, d_tilde_rev in terms:
            a_m = gn - chi_m
            a_p = gn + chi_p
            gt = np.sqrt(a_m * a_m + w2)
            gs = np.sqrt(np.maximum(a_p * a_p + w2, 1e-300))
            cos_scatt = (w2 - a_m * a_p) / np.maximum(gt * gs, 1e-300)
            sig = sigma_raw(model, alpha, beta, sa.weights[i], sb.weights[k],
                            d_tilde_rev, gt, cos_scatt)
            gauss = np.exp(-mb * r2 / 2.0
                           - mb * ((y + chi_m) ** 2 + (x + chi_p) ** 2) / 4.0)
            tot += chan_fac * gt / (gs * gn) * gauss * sig
        return pref * tot * inv_pdf

    return _mc_reduce(cfg, f"k3:{alpha}:{beta}:{i}:{j}", sample)


def mc_kernel_k2(mix: Mixture, model, alpha, beta, i, j, xi, xi_star,
                 cfg: McConfig) -> McResult:
    """k^{(beta,2)}: uniform S^2 (disparate masses) or plane Gaussian (equal)."""
    sa, sb = mix.species[alpha], mix.species[beta]
    if sa.mass == sb.mass:
        return _mc_k2_equal(mix, model, alpha, beta, i, j, xi, xi_star, cfg)
    return _mc_k2_disparate(mix, model, alpha, beta, i, j, xi, xi_star, cfg)


def _mc_k2_disparate(mix, model, alpha, beta, i, j, xi, xi_star, cfg):
    sa, sb = mix.species[alpha], mix.species[beta]
    ma, mb = sa.mass, sb.mass
    dm = ma - mb
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    gn = float(np.linalg.norm(xi - xi_star))
    G2 = (ma * xi - mb * xi_star) / dm
    mass_pref = (ma + mb) ** 2 / dm**2
    norm_ab = np.sqrt(level_norm(mix, alpha) * level_norm(mix, beta))
    terms = []
    for k in range(sa.n_levels):
        for l in range(sb.n_levels):
            d_il_kj = sa.levels[i] + sb.levels[l] - sa.levels[k] - sb.levels[j]
            disc = gn * gn - 2.0 * dm / (ma * mb) * d_il_kj
            if disc <= 0.0:
                continue
            chan_fac = np.sqrt(sa.weights[k] * sb.weights[l]
                               * sa.weights[i] * sb.weights[l]
                               / (sa.weights[k] * sb.weights[j])) \
                * np.exp(-(sa.levels[k] + sb.levels[l]) / 2.0)
            terms.append((np.sqrt(disc), chan_fac,
                          -(ma + mb) / (ma * mb) * d_il_kj,
                          sb.weights[l]))

    def sample(rng, nn):
        om = _uniform_sphere(rng, nn)
        tot = np.zeros(nn)
        for gp, chan_fac, tilde_kj_il, phi_l in terms:
            xi_p = G2[None, :] - (mb / dm) * gp * om
            xi_sp = G2[None, :] - (ma / dm) * gp * om
            ghat = xi_sp - xi[None, :]
            gbar = xi_star[None, :] - xi_p
            ghn = np.linalg.norm(ghat, axis=1)
            gbn = np.linalg.norm(gbar, axis=1)
            cos_scatt = np.sum(ghat * gbar, axis=1) / np.maximum(ghn * gbn, 1e-300)
            sig = sigma_raw(model, alpha, beta, sa.weights[i], phi_l,
                            tilde_kj_il, ghn, cos_scatt)
            expo = -(ma * np.sum(xi_p**2, axis=1)
                     + mb * np.sum(xi_sp**2, axis=1)) / 4.0
            tot += chan_fac * ghn * gp / np.maximum(gbn, 1e-300) \
                * sig * np.exp(expo)
        return mass_pref * norm_ab * 4.0 * np.pi * tot

    return _mc_reduce(cfg, f"k2:{alpha}:{beta}:{i}:{j}", sample)


def _mc_k2_equal(mix, model, alpha, beta, i, j, xi, xi_star, cfg):
    sa, sb = mix.species[alpha], mix.species[beta]
    m = sa.mass
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    n, e1, e2 = _plane_frame(xi, xi_star)
    gn = float(np.linalg.norm(xi - xi_star))
    x = float(xi @ n)
    y = float(xi_star @ n)
    p = xi - x * n
    p1, p2 = float(p @ e1), float(p @ e2)
    pn2 = p1 * p1 + p2 * p2
    norm_ab = np.sqrt(level_norm(mix, alpha) * level_norm(mix, beta))
    terms = []
    for k in range(sa.n_levels):
        for l in range(sb.n_levels):
            d_kj_il = sa.levels[k] + sb.levels[j] - sa.levels[i] - sb.levels[l]
            chi = d_kj_il / (m * gn)
            chan_fac = np.sqrt(sa.weights[k] * sb.weights[l]
                               * sa.weights[i] * sb.weights[l]
                               / (sa.weights[k] * sb.weights[j])) \
                * np.exp(-(sa.levels[k] + sb.levels[l]) / 2.0)
            terms.append((chi, chan_fac, 2.0 * d_kj_il / m, sb.weights[l]))

    def sample(rng, nn):
        delta = rng.normal(size=(nn, 2)) / np.sqrt(m)
        r2 = np.sum(delta**2, axis=1)
        w2 = pn2 + r2 - 2.0 * (p1 * delta[:, 0] + p2 * delta[:, 1])
        inv_pdf = (2.0 * np.pi / m) * np.exp(m * r2 / 2.0)
        tot = np.zeros(nn)
        for chi, chan_fac, tilde_kj_il, phi_l in terms:
            a_hat = gn + chi
            a_bar = gn - chi
            gh = np.sqrt(a_hat * a_hat + w2)
            gb = np.sqrt(np.maximum(a_bar * a_bar + w2, 1e-300))
            cos_scatt = (a_hat * a_bar - w2) / np.maximum(gh * gb, 1e-300)
            sig = sigma_raw(model, alpha, beta, sa.weights[i], phi_l,
                            tilde_kj_il, gh, cos_scatt)
            gauss = np.exp(-m * r2 / 2.0 - m * ((x - chi) ** 2 + (y - chi) ** 2) / 4.0)
            tot += 4.0 * chan_fac * gh / (gb * gn) * gauss * sig
        return norm_ab * tot * inv_pdf

    return _mc_reduce(cfg, f"k2eq:{alpha}:{beta}:{i}:{j}", sample)


# ---------------------------------------------------------------------------
# weak form

def mc_weak_bracket(f, g_test, mix: Mixture, model, cfg: McConfig,
                    width: float = 1.3) -> McResult:
    """Symmetrized weak form (Q(f,f), g) by channel/velocity/angle sampling.

    Velocities are importance-sampled from per-species Gaussians of the
    given width over sqrt(mass); channels uniformly.  Per-sample terms use
    the same Delta-form as the quadrature path, so collision invariants
    give exactly zero per sample.
    """
    from .collision import _bracket_channels
    channels = list(_bracket_channels(mix))
    n_ch = len(channels)

    def sample(rng, nn):
        pick = rng.integers(0, n_ch, size=nn)
        xi_raw = rng.normal(size=(nn, 3))
        xis_raw = rng.normal(size=(nn, 3))
        om = _uniform_sphere(rng, nn)
        vals = np.zeros(nn)
        for c_idx, (alpha, beta, i, k, j, l, d_tilde, phi_i, phi_j,
                    phi_k, phi_l) in enumerate(channels):
            mask = pick == c_idx
            if not np.any(mask):
                continue
            ma, mb = mix.species[alpha].mass, mix.species[beta].mass
            sd_a = width / np.sqrt(ma)
            sd_b = width / np.sqrt(mb)
            xi = xi_raw[mask] * sd_a
            xis = xis_raw[mask] * sd_b
            gvec = xi - xis
            gnv = np.linalg.norm(gvec, axis=1)
            disc = gnv**2 - 2.0 * d_tilde
            open_ = disc > 0
            gp = np.sqrt(np.where(open_, disc, 0.0))
            G = (ma * xi + mb * xis) / (ma + mb)
            gpv = gp[:, None] * om[mask]
            xi_p = G + (mb / (ma + mb)) * gpv
            xi_sp = G - (ma / (ma + mb)) * gpv
            cos_t = np.sum(om[mask] * gvec, axis=1) / np.maximum(gnv, 1e-300)
            sig = sigma_raw(model, alpha, beta, phi_i, phi_j, d_tilde, gnv, cos_t)
            ratio = (phi_i * phi_j) / (phi_k * phi_l)
            P = sig * gnv * (ratio * f(alpha, k, xi_p) * f(beta, l, xi_sp)
                             - f(alpha, i, xi) * f(beta, j, xis))
            delta = (g_test(alpha, i, xi) + g_test(beta, j, xis)
                     - g_test(alpha, k, xi_p) - g_test(beta, l, xi_sp))
            pdf = (np.exp(-0.5 * np.sum((xi / sd_a) ** 2, axis=1))
                   / ((2 * np.pi) ** 1.5 * sd_a**3)
                   * np.exp(-0.5 * np.sum((xis / sd_b) ** 2, axis=1))
                   / ((2 * np.pi) ** 1.5 * sd_b**3)) / (4.0 * np.pi * n_ch)
            vals[mask] = 0.25 * np.where(open_, P * delta, 0.0) / pdf
        return vals

    return _mc_reduce(cfg, "weak_bracket", sample)


# ---------------------------------------------------------------------------
# Lemma 3 randomized check

@dataclass(frozen=True)
class Lemma3CheckResult:
    min_gap: float
    argmin: dict
    samples: int
    seed: int


def lemma3_random_check(m_alpha: float, m_beta: float, cfg: McConfig,
                        delta_I_range=(-2.0, 2.0), velocity_box: float = 5.0,
                        q_max: float = 5.0, rho: float | None = None
                        ) -> Lemma3CheckResult:
    """Randomized minimum of the Lemma 3 gap over the sampling boxes.

    ``rho=None`` uses the closed form; passing e.g. rho=1.0 is the negative
    control that must find violations.
    """
    if m_alpha == m_beta:
        raise ValueError("lemma3_random_check requires unequal masses")
    n_total = int(cfg.samples)
    bounds = [(s, min(s + CHUNK, n_total)) for s in range(0, n_total, CHUNK)]

    def run(arg):
        idx, (lo, hi) = arg
        nn = hi - lo
        rng = _chunk_rng(cfg.seed, "lemma3", idx)
        xi = rng.uniform(-velocity_box, velocity_box, size=(nn, 3))
        aux = rng.uniform(-velocity_box, velocity_box, size=(nn, 3))
        eta = _uniform_sphere(rng, nn)
        q = rng.uniform(0.0, q_max, size=nn)
        q = np.maximum(q, 1e-12)
        dI = rng.uniform(delta_I_range[0], delta_I_range[1], size=nn)
        sample = build_lemma3_sample(m_alpha, m_beta, xi, aux, eta, q, dI)
        gaps = lemma3_gap(sample, rho=rho)
        a = int(np.argmin(gaps))
        info = {"gap": float(gaps[a]), "xi": sample.xi[a].tolist(),
                "xi_star": sample.xi_star[a].tolist(),
                "eta": sample.eta[a].tolist(), "q": float(sample.q[a]),
                "delta_I": float(sample.delta_I[a])}
        return idx, float(gaps[a]), info

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(run, enumerate(bounds)))
    else:
        parts = [run(p) for p in enumerate(bounds)]
    parts.sort(key=lambda t: t[0])
    best = min(parts, key=lambda t: (t[1], t[0]))
    return Lemma3CheckResult(min_gap=best[1], argmin=best[2],
                             samples=n_total, seed=cfg.seed)
