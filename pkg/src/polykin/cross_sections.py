"""Scattering cross-section families and their exact relations.

Two isotropic families ship: the hard-sphere form

    sigma = C_ab * sqrt(|g|^2 - 2*dIt) / (|g| * phi_i * phi_j)   (open channels)

and the Grad-bound-saturating family

    sigma = C * (Psi + Psi^(gamma/2)) / (|g|^2 * phi_i * phi_j),
    Psi   = |g| * sqrt(|g|^2 - 2*dIt),

where dIt is the energy gap in squared-velocity units.  Both vanish on
closed channels (|g|^2 <= 2*dIt) and both satisfy microreversibility
exactly because they depend on the collision only through the symmetric
combination |g| * |g'|.  Evaluation accepts a cos(theta) argument so an
anisotropic family can be added, but the built-ins ignore it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import CollisionChannel, Mixture, ValidationError, reverse_channel


@dataclass(frozen=True)
class HardSphere:
    """Hard-sphere-like model with one positive constant per species pair."""

    C: np.ndarray  # (s, s), symmetric positive

    isotropic = True
    kind = "hard_sphere"


@dataclass(frozen=True)
class GradBounded:
    """Family saturating the Grad-type upper bound with exponent gamma."""

    C: float
    gamma: float

    isotropic = True
    kind = "grad_bounded"


def hard_sphere(C, s: int | None = None) -> HardSphere:
    """Build a validated HardSphere model; scalar C means C_ab = C for all pairs."""
    arr = np.asarray(C, dtype=float)
    if arr.ndim == 0:
        if s is None:
            raise ValidationError("cross_section.C: scalar form needs species count")
        arr = np.full((s, s), float(arr))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError("cross_section.C: must be a square matrix")
    if not np.all(arr > 0):
        raise ValidationError("cross_section.C: all entries must be positive")
    if not np.array_equal(arr, arr.T):
        raise ValidationError("cross_section.C: matrix must be symmetric")
    return HardSphere(C=arr)


def grad_bounded(C: float, gamma: float) -> GradBounded:
    if C <= 0:
        raise ValidationError("cross_section.C: must be positive")
    if not (0.0 < gamma < 1.0):
        raise ValidationError("cross_section.gamma: must lie strictly in (0, 1)")
    return GradBounded(C=float(C), gamma=float(gamma))


def validate_model(model, mix: Mixture) -> None:
    if isinstance(model, HardSphere):
        if model.C.shape != (mix.s, mix.s):
            raise ValidationError("cross_section.C: shape must be (s, s)")
    elif isinstance(model, GradBounded):
        if not (0.0 < model.gamma < 1.0):
            raise ValidationError("cross_section.gamma: must lie strictly in (0, 1)")
    else:
        raise ValidationError(f"cross_section: unknown model {model!r}")


def pair_constant(model, alpha: int, beta: int) -> float:
    return float(model.C[alpha, beta]) if isinstance(model, HardSphere) else float(model.C)


def sigma_raw(model, alpha: int, beta: int, phi_i, phi_j, d_tilde, g_norm,
              cos_theta=0.0) -> np.ndarray:
    """Cross section from raw channel data; vectorized over g_norm.

    phi_i, phi_j are the weights of the pre-collision levels and d_tilde the
    gap (in squared-velocity units) of the forward collision.  Returns 0 on
    closed channels.
    """
    g = np.asarray(g_norm, dtype=float)
    disc = g * g - 2.0 * d_tilde
    open_ = disc > 0.0
    disc = np.where(open_, disc, 0.0)
    C = pair_constant(model, alpha, beta)
    if isinstance(model, HardSphere):
        with np.errstate(divide="ignore", invalid="ignore"):
            val = C * np.sqrt(disc) / (g * phi_i * phi_j)
    else:
        psi_v = g * np.sqrt(disc)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = model.C * (psi_v + psi_v ** (0.5 * model.gamma)) / (g * g * phi_i * phi_j)
    return np.where(open_ & (g > 0), val, 0.0)


def _phis(mix: Mixture, ch: CollisionChannel) -> tuple[float, float, float, float]:
    sa, sb = mix.species[ch.alpha], mix.species[ch.beta]
    return sa.weights[ch.i], sb.weights[ch.j], sa.weights[ch.k], sb.weights[ch.l]


def sigma(model, mix: Mixture, ch: CollisionChannel, g_norm, cos_theta=0.0):
    """sigma_{ij,kl}^{ab}(|g|, cos theta); zero when the channel is closed."""
    phi_i, phi_j, _, _ = _phis(mix, ch)
    return sigma_raw(model, ch.alpha, ch.beta, phi_i, phi_j, ch.delta_I_tilde,
                     g_norm, cos_theta)


def psi(ch: CollisionChannel, g_norm):
    """Psi = |g| * |g'| for the forward collision; zero when closed."""
    g = np.asarray(g_norm, dtype=float)
    disc = g * g - 2.0 * ch.delta_I_tilde
    return np.where(disc > 0.0, g * np.sqrt(np.maximum(disc, 0.0)), 0.0)


def microreversibility_residual(model, mix: Mixture, ch: CollisionChannel, g_norm,
                                cos_theta=0.0):
    """phi_i phi_j |g|^2 sigma_{ij,kl}(|g|) - phi_k phi_l |g'|^2 sigma_{kl,ij}(|g'|).

    Defined for open channels; 0 in exact arithmetic for both built-ins.
    """
    g = np.asarray(g_norm, dtype=float)
    disc = g * g - 2.0 * ch.delta_I_tilde
    if np.any(disc <= 0):
        raise ValidationError("microreversibility_residual: channel closed at g_norm")
    gp = np.sqrt(disc)
    phi_i, phi_j, phi_k, phi_l = _phis(mix, ch)
    fwd = phi_i * phi_j * g * g * sigma(model, mix, ch, g, cos_theta)
    bwd = phi_k * phi_l * gp * gp * sigma(model, mix, reverse_channel(ch), gp, cos_theta)
    return fwd - bwd


@dataclass(frozen=True)
class SymmetryReport:
    """Max |residual| per symmetry relation, over sampled channels and speeds."""

    species_swap_max: float        # sigma^{ab}_{kl,ij} vs sigma^{ba}_{lk,ji}
    angle_flip_max: float          # sigma^{aa}(|g|, -cos) vs sigma^{aa}(|g|, cos)
    index_swap_max: float          # sigma^{aa}_{ij,kl} vs sigma^{aa}_{ji,kl}, _{ji,lk}
    microreversibility_max: float
    scale: float

    @property
    def max_residual(self) -> float:
        return max(self.species_swap_max, self.angle_flip_max,
                   self.index_swap_max, self.microreversibility_max)


def _swap_species_channel(ch: CollisionChannel) -> CollisionChannel:
    return CollisionChannel(
        alpha=ch.beta, beta=ch.alpha, i=ch.j, j=ch.i, k=ch.l, l=ch.k,
        delta_I=ch.delta_I, delta_I_tilde=ch.delta_I_tilde,
        delta_I_hat=None if ch.delta_I_hat is None else -ch.delta_I_hat,
    )


def symmetry_residuals(model, mix: Mixture, channels, g_norms,
                       cos_thetas=None) -> SymmetryReport:
    """Measure the (sr)/(sr1) relations and microreversibility on samples."""
    g_norms = np.atleast_1d(np.asarray(g_norms, dtype=float))
    if cos_thetas is None:
        cos_thetas = np.zeros_like(g_norms)
    sw = fl = ix = mr = scale = 0.0
    for ch in channels:
        for g, c in zip(g_norms, cos_thetas):
            v = float(sigma(model, mix, ch, g, c))
            scale = max(scale, abs(v))
            sw = max(sw, abs(v - float(sigma(model, mix, _swap_species_channel(ch), g, c))))
            if ch.alpha == ch.beta:
                fl = max(fl, abs(v - float(sigma(model, mix, ch, g, -c))))
                ji = CollisionChannel(ch.alpha, ch.beta, ch.j, ch.i, ch.k, ch.l,
                                      ch.delta_I, ch.delta_I_tilde, ch.delta_I_hat)
                ji_lk = CollisionChannel(ch.alpha, ch.beta, ch.j, ch.i, ch.l, ch.k,
                                         ch.delta_I, ch.delta_I_tilde, ch.delta_I_hat)
                ix = max(ix, abs(v - float(sigma(model, mix, ji, g, c))),
                         abs(v - float(sigma(model, mix, ji_lk, g, c))))
            if g * g > 2.0 * ch.delta_I_tilde and g > 0:
                r = float(microreversibility_residual(model, mix, ch, g, c))
                mr = max(mr, abs(r))
    return SymmetryReport(species_swap_max=sw, angle_flip_max=fl, index_swap_max=ix,
                          microreversibility_max=mr, scale=max(scale, 1e-300))
