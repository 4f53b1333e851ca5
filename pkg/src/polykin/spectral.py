"""Spectral verification: null space, coercivity, compactness surrogates.

The assembled L is a finite symmetric matrix; these routines extract the
quantities the theory pins down: nonnegativity, an (s+4)-dimensional
near-null cluster aligned with the weighted invariants, the coercivity
constant lambda of (h, Lh) >= lambda (h, nu h) on the orthogonal
complement, the linear bounds on nu, and singular-value diagnostics of K
standing in for compactness.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as sla

from .grids import VelocityGrid
from .linops import BlockOperator, DiagonalOperator
from .mixture import Mixture


@dataclass
class SpectralReport:
    """Bundle of every spectral diagnostic; serializable via to_dict()."""

    eigenvalues: np.ndarray
    null_dim_estimate: int
    null_gap: float
    null_residuals: np.ndarray
    principal_angles_deg: np.ndarray
    lambda_coercivity: float
    nu_minus: float
    nu_plus: float
    singular_values: np.ndarray = field(default=None)
    hs_norm_estimate: float = float("nan")
    sv_tail_fraction: float = float("nan")
    asymmetry_metric: float = float("nan")
    min_eigenvalue: float = float("nan")
    max_eigenvalue: float = float("nan")
    reconstruction_residual: float = float("nan")

    def to_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if isinstance(val, np.ndarray):
                out[key] = None if val is None else val.tolist()
            elif isinstance(val, (np.floating, np.integer)):
                out[key] = val.item()
            else:
                out[key] = val
        return out


def eigensolve(L: BlockOperator | np.ndarray, check: bool = True):
    """Full ascending eigendecomposition of a symmetric operator.

    Rejects non-finite input; optionally verifies the reconstruction
    residual ||L V - V D|| / ||L|| <= 1e-10.
    """
    mat = L.matrix if isinstance(L, BlockOperator) else np.asarray(L)
    if not np.all(np.isfinite(mat)):
        raise ValueError("eigensolve: operator contains non-finite entries")
    w, v = np.linalg.eigh(mat)
    if check:
        scale = max(float(np.abs(w).max()), 1e-300)
        resid = float(np.linalg.norm(mat @ v - v * w)) / (scale * np.sqrt(len(w)))
        if resid > 1e-10:
            raise ArithmeticError(f"eigendecomposition residual {resid:.2e} > 1e-10")
    return w, v


def eigenvalues_window(L: BlockOperator | np.ndarray, lo: int, hi: int,
                       vectors: bool = False):
    """Eigenvalues (and optionally vectors) with ascending indices [lo, hi]."""
    mat = L.matrix if isinstance(L, BlockOperator) else np.asarray(L)
    if not np.all(np.isfinite(mat)):
        raise ValueError("eigensolve: operator contains non-finite entries")
    if vectors:
        return sla.eigh(mat, subset_by_index=[lo, hi])
    return sla.eigh(mat, eigvals_only=True, subset_by_index=[lo, hi])


def detect_null_cluster(eigs: np.ndarray, expected: int,
                        gap_factor: float = 10.0) -> tuple[int, float]:
    """Size of the leading near-zero cluster and its separation ratio.

    Scans ratios of consecutive eigenvalues (floored at a relative epsilon
    so roundoff-scale values cannot fake a gap) over a window around the
    expected count and returns the split with the largest ratio; the
    estimate is only accepted as a cluster when the ratio reaches
    ``gap_factor``, otherwise 0 is returned with the best ratio found.
    """
    eigs = np.asarray(eigs)
    scale = max(float(np.abs(eigs).max()), 1e-300)
    floor = 1e-14 * scale
    clamped = np.maximum(np.abs(eigs), floor)
    hi = min(len(eigs) - 1, max(2 * expected + 2, expected + 4))
    best_d, best_ratio = 0, 0.0
    for d in range(1, hi + 1):
        ratio = clamped[d] / clamped[d - 1]
        if ratio > best_ratio:
            best_d, best_ratio = d, float(ratio)
    if best_ratio < gap_factor:
        return 0, best_ratio
    return best_d, best_ratio


def null_space_report(L: BlockOperator, lam: DiagonalOperator,
                      weighted_invariants: np.ndarray,
                      gap_factor: float = 10.0, n_eigs: int | None = None):
    """Null-cluster size, per-invariant residuals, and principal angles.

    Returns (dim_estimate, gap_ratio, residuals, angles_deg, low_eigs).
    Principal angles are between the cluster eigenvectors and the span of
    the weighted invariants.
    """
    n_inv = weighted_invariants.shape[0]
    V = weighted_invariants.reshape(n_inv, -1).T
    if n_eigs is None:
        n_eigs = max(2 * n_inv + 2, n_inv + 4)
    n_eigs = min(n_eigs, L.dim - 1)
    w, vecs = eigenvalues_window(L, 0, n_eigs, vectors=True)
    dim_est, gap = detect_null_cluster(w, n_inv, gap_factor)
    lam_flat = lam.flat()
    residuals = np.array([
        np.linalg.norm(L.matrix @ V[:, t]) / np.linalg.norm(lam_flat * V[:, t])
        for t in range(n_inv)])
    k = dim_est if dim_est > 0 else n_inv
    qa, _ = np.linalg.qr(V)
    qb, _ = np.linalg.qr(vecs[:, :k])
    svals = np.clip(np.linalg.svd(qa.T @ qb, compute_uv=False), -1.0, 1.0)
    angles = np.degrees(np.arccos(svals))[::-1]
    return dim_est, gap, residuals, angles, w


def _is_diagonal(mat: np.ndarray, chunk: int = 512) -> bool:
    for start in range(0, mat.shape[0], chunk):
        stop = min(start + chunk, mat.shape[0])
        block = mat[start:stop].copy()
        block[np.arange(stop - start), np.arange(start, stop)] = 0.0
        if np.any(block):
            return False
    return True


def coercivity_lambda(L: BlockOperator, lam: DiagonalOperator,
                      weighted_invariants: np.ndarray) -> float:
    """min over the complement of the weighted invariants of (h,Lh)/(h,nu h).

    Computed as the smallest eigenvalue of the pencil (P^T L P, P^T D P)
    with P an orthonormal basis of the complement and D = diag(nu).
    Exactly 1 when K = 0 (then L = Lambda and the pencil is the identity).
    """
    lam_flat = lam.flat()
    if _is_diagonal(L.matrix) or L.dim <= weighted_invariants.shape[0]:
        return 1.0
    n_inv = weighted_invariants.shape[0]
    V = weighted_invariants.reshape(n_inv, -1).T
    full_q, _ = np.linalg.qr(V, mode="complete")
    P = full_q[:, n_inv:]
    A = P.T @ L.matrix @ P
    B = (P.T * lam_flat) @ P
    w = sla.eigh(A, B, eigvals_only=True, subset_by_index=[0, 0])
    return float(w[0])


def nu_bounds(lam: DiagonalOperator) -> tuple[float, float]:
    """(nu_minus, nu_plus) such that nu_- (1+|xi|) <= nu <= nu_+ (1+|xi|)."""
    ratios = lam.values / (1.0 + lam.speeds)[None, :]
    nu_minus = float(ratios.min())
    nu_plus = float(ratios.max())
    if nu_minus <= 0:
        raise ArithmeticError(
            f"nu_minus = {nu_minus:g} <= 0 contradicts the coercivity bound")
    return nu_minus, nu_plus


def sv_decay(K: BlockOperator) -> tuple[np.ndarray, float, float]:
    """Singular values of K (descending), HS norm, and the tail fraction.

    K is symmetric, so singular values are |eigenvalues|; the tail
    fraction is sum of sigma_k^2 over k > dim/2 divided by the total, a
    compactness surrogate that must shrink under refinement.
    """
    w = np.linalg.eigvalsh(K.matrix)
    sv = np.sort(np.abs(w))[::-1]
    total = float(np.sum(sv**2))
    if total == 0.0:
        return sv, 0.0, 0.0
    tail = float(np.sum(sv[K.dim // 2:] ** 2)) / total
    return sv, float(np.sqrt(total)), tail


def spectral_report(ops, mix: Mixture, grid: VelocityGrid,
                    weighted_invariants: np.ndarray, gap_factor: float = 10.0,
                    full: bool = True) -> SpectralReport:
    """Run the whole battery against an AssembledOperators bundle."""
    dim_est, gap, residuals, angles, low = null_space_report(
        ops.L, ops.lambda_op, weighted_invariants, gap_factor)
    lam_c = coercivity_lambda(ops.L, ops.lambda_op, weighted_invariants)
    nmin, nmax = nu_bounds(ops.lambda_op)
    if full:
        w, v = eigensolve(ops.L)
        scale = max(float(np.abs(w).max()), 1e-300)
        recon = float(np.linalg.norm(ops.L.matrix @ v - v * w)) \
            / (scale * np.sqrt(len(w)))
        sv, hs, tail = sv_decay(ops.K)
        eigenvalues = w
        min_eig, max_eig = float(w[0]), float(w[-1])
    else:
        eigenvalues = low
        recon = float("nan")
        sv, hs, tail = None, float("nan"), float("nan")
        min_eig = float(low[0])
        max_eig = float("nan")
    return SpectralReport(
        eigenvalues=eigenvalues,
        null_dim_estimate=dim_est,
        null_gap=gap,
        null_residuals=residuals,
        principal_angles_deg=angles,
        lambda_coercivity=lam_c,
        nu_minus=nmin,
        nu_plus=nmax,
        singular_values=sv,
        hs_norm_estimate=hs,
        sv_tail_fraction=tail,
        asymmetry_metric=ops.asymmetry,
        min_eigenvalue=min_eig,
        max_eigenvalue=max_eig,
        reconstruction_residual=recon,
    )
