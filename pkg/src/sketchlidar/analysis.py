"""Fisher information, Cramér-Rao bounds and statistical-efficiency metrics.

All information matrices are taken over the 2K free parameters
(alpha_1..alpha_K, t_1..t_K); alpha_0 is eliminated through the simplex
constraint.  The ideal root mean squared error of an unbiased estimator is

    crb_rmse = sqrt( sum of the 2K diagonal entries of FIM^{-1} ),

and the relative error percentage of a compressive statistic is

    rep = 100 * (crb_rmse_statistic - crb_rmse_full_data) / crb_rmse_full_data,

which is independent of the photon count because every FIM here scales
linearly with n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimate import UndefinedPhaseError, _SketchModel
from .model import ImpulseResponse, ModelParams, model_cf, model_pmf_grad
from .sketch import FrequencySet

__all__ = [
    "EfficiencyReport",
    "SingularModelError",
    "NonIdentifiableError",
    "fim_full",
    "fim_sketch",
    "fim_coarse",
    "crb_rmse",
    "rep",
    "rep_coarse",
    "efficiency_report",
    "circular_distance",
    "rmse",
    "detection_rate",
    "rmse_ratio",
    "circular_mean_std",
]


class SingularModelError(ValueError):
    """The model pmf vanishes where its derivative does not."""


class NonIdentifiableError(ValueError):
    """The Fisher information matrix is singular: parameters not identifiable."""


@dataclass(frozen=True)
class EfficiencyReport:
    """CRB comparison of a sketch against the full data."""

    rmse_full: float
    rmse_sketch: float
    rep: float
    m: int
    scheme: str


def fim_full(params: ModelParams, irf: ImpulseResponse, n: float) -> np.ndarray:
    """Full-data Fisher information, n * sum_x (dp dp^T) / p over x = 0..T-1."""
    p, dp = model_pmf_grad(params, irf)
    dead = p < 1e-300
    if np.any(dead & (np.abs(dp).max(axis=0) > 1e-12)):
        raise SingularModelError(
            "pmf vanishes at a point where its derivative does not")
    keep = ~dead
    I = n * np.einsum("ix,jx->ij", dp[:, keep], dp[:, keep] / p[keep])
    return 0.5 * (I + I.T)


def fim_sketch(params: ModelParams, irf: ImpulseResponse, freqs: FrequencySet,
               n: float, eps: float = 1e-8) -> np.ndarray:
    """Sketch Fisher information n * J^T Sigma^{-1} J.

    J is the (2m x 2K) Jacobian of the stacked model sketch and Sigma the
    stacked-real feature covariance at theta, ridge-regularized by
    eps * (trace / 2m) before inversion.
    """
    sm = _SketchModel(irf, freqs)
    u, J = sm.stacked_and_jacobian(params.alphas, params.depths)
    C = sm.cov(params.alphas, params.depths)
    dim = C.shape[0]
    S = C + (eps * np.trace(C) / dim) * np.eye(dim)
    I = n * (J.T @ np.linalg.solve(S, J))
    return 0.5 * (I + I.T)


def fim_coarse(params: ModelParams, irf: ImpulseResponse, m_tilde: int,
               n: float) -> np.ndarray:
    """Fisher information of the coarse-binned statistic.

    The cell counts are multinomial with probabilities integrated from the
    model pmf, so I = n * sum_j (dq dq^T) / q over the m_tilde cells.
    """
    p, dp = model_pmf_grad(params, irf)
    delta = -(-irf.T // m_tilde)
    edges = np.arange(m_tilde) * delta
    q = np.add.reduceat(p, edges)
    dq = np.add.reduceat(dp, edges, axis=1)
    dead = q < 1e-300
    if np.any(dead & (np.abs(dq).max(axis=0) > 1e-12)):
        raise SingularModelError(
            "cell probability vanishes where its derivative does not")
    keep = ~dead
    I = n * np.einsum("ij,kj->ik", dq[:, keep], dq[:, keep] / q[keep])
    return 0.5 * (I + I.T)


def crb_rmse(fim: np.ndarray, K: int | None = None) -> float:
    """sqrt of the summed CRB variances, the 2K diagonal entries of FIM^{-1}."""
    fim = np.asarray(fim, dtype=float)
    dim = fim.shape[0]
    if K is not None and dim != 2 * K:
        raise ValueError(f"FIM of shape {fim.shape} does not match K={K}")
    w = np.linalg.eigvalsh(fim)
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        raise NonIdentifiableError("Fisher information matrix is singular")
    return float(np.sqrt(np.trace(np.linalg.inv(fim))))


def rep(params: ModelParams, irf: ImpulseResponse, freqs: FrequencySet,
        eps: float = 1e-8) -> float:
    """Relative error percentage of the sketch, 100*(RMSE_m - RMSE_n)/RMSE_n."""
    n_ref = 1000.0  # cancels between the two bounds
    full = crb_rmse(fim_full(params, irf, n_ref))
    sk = crb_rmse(fim_sketch(params, irf, freqs, n_ref, eps=eps))
    return 100.0 * (sk - full) / full


def rep_coarse(params: ModelParams, irf: ImpulseResponse, m_tilde: int) -> float:
    """Relative error percentage of coarse binning with m_tilde cells."""
    n_ref = 1000.0
    full = crb_rmse(fim_full(params, irf, n_ref))
    coarse = crb_rmse(fim_coarse(params, irf, m_tilde, n_ref))
    return 100.0 * (coarse - full) / full


def efficiency_report(params: ModelParams, irf: ImpulseResponse,
                      freqs: FrequencySet, n: float = 1000.0,
                      eps: float = 1e-8) -> EfficiencyReport:
    full = crb_rmse(fim_full(params, irf, n))
    sk = crb_rmse(fim_sketch(params, irf, freqs, n, eps=eps))
    return EfficiencyReport(rmse_full=full, rmse_sketch=sk,
                            rep=100.0 * (sk - full) / full,
                            m=freqs.m, scheme=freqs.scheme)


# ---------------------------------------------------------------------------
# experiment metrics

def circular_distance(a, b, T: int):
    """min(|a-b|, T-|a-b|) on the circular window."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % T
    return np.minimum(d, T - d)


def rmse(estimates, truths, T: int | None = None, circular: bool = False) -> float:
    """Root mean squared depth error; surface pairs match by sorted order."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimate and truth lists must have equal length")
    if circular:
        if T is None:
            raise ValueError("circular RMSE needs T")
        d = circular_distance(est, tru, T)
    else:
        d = est - tru
    return float(np.sqrt(np.mean(np.square(d))))


def detection_rate(errors, tol: float) -> float:
    """Fraction of absolute errors within tol bins."""
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        return 0.0
    return float(np.mean(errors <= tol))


def rmse_ratio(rmse_a: float, rmse_b: float) -> float:
    """R = rmse_a / rmse_b; R < 1 means method a is more accurate on average."""
    if rmse_b <= 0:
        raise ValueError("denominator RMSE must be positive")
    return float(rmse_a / rmse_b)


def circular_mean_std(params: ModelParams, irf: ImpulseResponse, n: int) -> float:
    """Asymptotic standard deviation of the circular-mean depth estimate.

    Delta method on t_hat = (T/2pi)*phase(z) with z Gaussian around the model
    CF at the fundamental, covariance C/n of the stacked (cos, sin) feature.
    """
    from .estimate import covariance
    from .sketch import truncated_frequencies

    T = irf.T
    z0 = model_cf(params, irf, 1)
    r2 = abs(z0) ** 2
    if r2 < 1e-24:
        raise UndefinedPhaseError("model CF vanishes at the fundamental")
    C = covariance(params, irf, truncated_frequencies(T, 1))
    g = (T / (2.0 * np.pi)) * np.array([-z0.imag, z0.real]) / r2
    return float(np.sqrt(g @ C @ g / n))
