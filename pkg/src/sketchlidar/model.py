"""Time-of-flight observation model.

A pixel observes photon time stamps x in {0, ..., T-1} drawn from a mixture of
K shifted copies of the system impulse response (the surfaces) plus a uniform
background.  The time axis is circular: bin T wraps to bin 0, and all shifts
and distances are taken modulo T.

This module holds the analytic ground truth the rest of the library is tested
against: the impulse response and its cached discrete Fourier transform, the
mixture parameters, the model characteristic function on the orthogonal
frequency grid omega_j = 2*pi*j/T, and the model pmf.

Depth positions t_k are real valued (sub-bin).  Fractional shifts are realized
in the Fourier domain with the centered frequency branch (frequencies above
T/2 treated as negative, Nyquist bin kept real), which is the unique choice
that keeps the pmf real valued and makes DFT(pmf)[j] agree exactly with the
characteristic function returned here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ImpulseResponse",
    "ModelParams",
    "gaussian_irf",
    "irf_from_samples",
    "irf_cf",
    "model_cf",
    "model_cf_many",
    "model_pmf",
    "model_pmf_grad",
    "params_from_sbr",
]

_SUM_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ImpulseResponse:
    """Discrete impulse response on a circular window of T bins.

    `h` is normalized to sum to one (the pulse integral is folded into the
    mixture weights), and `h_hat` caches sum_t h[t]*exp(+2i*pi*j*t/T) for
    j = 0..T-1: the characteristic function of the pulse shape on the
    orthogonal frequency grid.

    `bin_width` is metadata only (physical seconds per bin).
    """

    T: int
    h: np.ndarray
    h_hat: np.ndarray
    bin_width: float = 1.0

    def cf(self, j: int) -> complex:
        """Cached characteristic function value at frequency index j."""
        return irf_cf(self, j)


def _build_irf(values: np.ndarray, bin_width: float) -> ImpulseResponse:
    h = values / values.sum()
    # h real => conj(fft) evaluates sum_t h[t] e^{+2i pi j t / T}
    h_hat = np.conj(np.fft.fft(h))
    return ImpulseResponse(T=len(h), h=_readonly(h), h_hat=_readonly(h_hat),
                           bin_width=float(bin_width))


def gaussian_irf(sigma: float, T: int, bin_width: float = 1.0) -> ImpulseResponse:
    """Circular Gaussian pulse of width `sigma` bins, centered at bin 0.

    The pulse is evaluated with the circular distance d(t, 0) = min(t, T - t),
    so h[t] == h[T - t]; callers position the pulse through the model's phase
    term, never by resampling h.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if T < 2:
        raise ValueError(f"T must be at least 2, got {T}")
    t = np.arange(T, dtype=float)
    d = np.minimum(t, T - t)
    h = np.exp(-0.5 * (d / sigma) ** 2)
    return _build_irf(h, bin_width)


def irf_from_samples(values, bin_width: float = 1.0) -> ImpulseResponse:
    """Impulse response from measured per-bin values (normalized on load)."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or len(v) < 2:
        raise ValueError("impulse response needs a 1-D vector of length >= 2")
    if np.any(v < 0):
        raise ValueError("impulse response values must be nonnegative")
    if not np.any(v > 0):
        raise ValueError("impulse response must have at least one positive value")
    return _build_irf(v, bin_width)


def irf_cf(irf: ImpulseResponse, j: int) -> complex:
    """Characteristic function of the pulse at frequency index j (cache lookup)."""
    if not 0 <= j < irf.T:
        raise ValueError(f"frequency index {j} out of range [0, {irf.T})")
    return complex(irf.h_hat[j])


@dataclass(frozen=True)
class ModelParams:
    """Mixture parameters theta = (alpha_0, ..., alpha_K, t_1, ..., t_K).

    alphas[0] is the background weight; alphas[1:] pair with `depths`, the
    continuous surface positions in [0, T).  Weights form a simplex and
    depths are stored sorted ascending (canonical form).
    """

    alphas: np.ndarray
    depths: np.ndarray

    def __init__(self, alphas, depths=()):
        alphas = np.asarray(alphas, dtype=float)
        depths = np.asarray(depths, dtype=float)
        if alphas.ndim != 1 or alphas.size < 1:
            raise ValueError("alphas must be a 1-D vector (alpha_0, ..., alpha_K)")
        if depths.shape != (alphas.size - 1,):
            raise ValueError(
                f"got {alphas.size - 1} surface weights but {depths.size} depths")
        if np.any(alphas < 0):
            raise ValueError("mixture weights must be nonnegative")
        if abs(alphas.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must sum to 1, got {alphas.sum()!r}")
        alphas = alphas / alphas.sum()
        order = np.argsort(depths, kind="stable")
        depths = depths[order]
        alphas = np.concatenate([alphas[:1], alphas[1:][order]])
        object.__setattr__(self, "alphas", _readonly(alphas))
        object.__setattr__(self, "depths", _readonly(depths))

    @property
    def K(self) -> int:
        return len(self.depths)

    @property
    def sbr(self) -> float:
        """Detection-point signal-to-background ratio, sum(alpha_k)/alpha_0."""
        signal = self.alphas[1:].sum()
        if self.alphas[0] == 0:
            return np.inf if signal > 0 else np.nan
        return float(signal / self.alphas[0])


def params_from_sbr(sbr: float, depths, weights=None) -> ModelParams:
    """Build ModelParams with the given detection-point SBR.

    `weights` are relative surface intensities (default equal split); the
    background weight is 1/(1+sbr).
    """
    depths = np.atleast_1d(np.asarray(depths, dtype=float))
    K = len(depths)
    if weights is None:
        weights = np.ones(K)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    a0 = 1.0 / (1.0 + sbr)
    return ModelParams(np.concatenate([[a0], (1.0 - a0) * w]), depths)


def _centered_phase(T: int, d: np.ndarray, t: float):
    """exp(i*omega_tilde(d)*t) with omega on the centered branch.

    For even T the Nyquist bin d == T/2 uses the real weight cos(pi*t), which
    splits that bin's energy evenly between +pi and -pi so a fractionally
    shifted real signal stays real.
    Returns (phase, omega_tilde, nyquist_mask).
    """
    c = np.where(2 * d <= T, d, d - T).astype(float)
    om = (2.0 * np.pi / T) * c
    nyq = (2 * d == T)
    ph = np.exp(1j * om * t)
    if np.any(nyq):
        ph = np.where(nyq, np.cos(np.pi * t) + 0j, ph)
    return ph, om, nyq


def model_cf_many(params: ModelParams, irf: ImpulseResponse, indices) -> np.ndarray:
    """Model characteristic function at an array of frequency indices.

    Indices are reduced modulo T.  At every nonzero index the background
    contributes exactly zero (the discrete uniform CF vanishes on the
    orthogonal grid); at index 0 the value is sum(alphas) == 1.
    """
    d = np.asarray(indices, dtype=np.int64) % irf.T
    hh = irf.h_hat[d]
    out = np.zeros(d.shape, dtype=complex)
    for ak, tk in zip(params.alphas[1:], params.depths):
        ph, _, _ = _centered_phase(irf.T, d, tk)
        out += ak * hh * ph
    out += params.alphas[0] * (d == 0)
    return out


def model_cf(params: ModelParams, irf: ImpulseResponse, j: int) -> complex:
    """Model characteristic function at frequency index j in [0, T)."""
    if not 0 <= j < irf.T:
        raise ValueError(f"frequency index {j} out of range [0, {irf.T})")
    return complex(model_cf_many(params, irf, j))


def model_pmf(params: ModelParams, irf: ImpulseResponse) -> np.ndarray:
    """Arrival-time pmf of the mixture over the T bins.

    Fractional depths are realized by Fourier phase shifts (band-limited
    interpretation), so DFT(pmf)[j] equals model_cf(..., j) exactly.  Tiny
    negative ringing from the band-limited shift of a sharp pulse is clamped
    to zero; for smooth pulses this is at rounding level.
    """
    cf = model_cf_many(params, irf, np.arange(irf.T))
    p = np.fft.fft(cf).real / irf.T
    return np.clip(p, 0.0, None)


def model_pmf_grad(params: ModelParams, irf: ImpulseResponse):
    """Pmf and its Jacobian w.r.t. the free parameters.

    The free parameterization eliminates alpha_0 through the simplex
    constraint: theta_free = (alpha_1..alpha_K, t_1..t_K).  Returns
    (p, dp) with dp of shape (2K, T).
    """
    T, K = irf.T, params.K
    d = np.arange(T)
    hh = irf.h_hat
    p = model_pmf(params, irf)
    dp = np.zeros((2 * K, T))
    for k, (ak, tk) in enumerate(zip(params.alphas[1:], params.depths)):
        ph, om, nyq = _centered_phase(T, d, tk)
        dph = 1j * om * ph
        if np.any(nyq):
            dph = np.where(nyq, -np.pi * np.sin(np.pi * tk) + 0j, dph)
        shifted = np.fft.fft(hh * ph).real / T      # the k-th component pmf
        dp[k] = shifted - 1.0 / T                   # d/d alpha_k (alpha_0 absorbs)
        dp[K + k] = ak * np.fft.fft(hh * dph).real / T
    return p, dp
