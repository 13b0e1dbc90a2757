"""Parameter estimation from sketches and from full or coarsened histograms.

Sketch-side estimators
    * :func:`circular_mean` - closed-form depth from the fundamental frequency.
    * :func:`smle_fit` - sketched maximum-likelihood estimation.  The sketch is
      asymptotically Gaussian around the model CF with covariance Sigma/n, so
      minimizing

          (m/2) * log det Sigma_theta
              + n * (z_n - z_theta)^T Sigma_theta^{-1} (z_n - z_theta)

      over theta is a Gaussian log-likelihood fit.  Sigma_theta is re-evaluated
      at every candidate theta (continuous updating); the feature vector, its
      covariance and the objective gradient are all handled in the stacked
      real representation [Re z; Im z] of length 2m.

Full-data / coarse baselines
    * :func:`matched_filter` - log matched filter (single-peak MLE).
    * :func:`em_fit` - EM on the (K+1)-component mixture.
    * :func:`coarse_bin` plus :func:`coarse_matched_filter` / :func:`coarse_em`
      - the coarse-binning compression baseline.
    * :func:`ifft_estimate` - zero-padded inverse FFT of a truncated sketch.

All covariances of the stacked features derive from the model CF through
product-to-sum identities; frequency sums and differences reduce modulo T
onto the orthogonal grid, so only model CF evaluations are needed.  Because
the background CF vanishes on that grid, neither z_theta nor Sigma_theta
depends on alpha_0: the free parameters are (alpha_1..alpha_K, t_1..t_K).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .model import ImpulseResponse, ModelParams, irf_from_samples
from .sketch import FrequencySet, Sketch

__all__ = [
    "FitResult",
    "CoarseHistogram",
    "MissingFrequencyError",
    "UndefinedPhaseError",
    "NonFiniteLossError",
    "circular_mean",
    "covariance",
    "model_sketch",
    "model_sketch_jacobian",
    "smle_loss",
    "smle_loss_grad",
    "smle_fit",
    "coarse_bin",
    "coarse_irf",
    "matched_filter",
    "max_peak",
    "coarse_matched_filter",
    "coarse_em",
    "em_fit",
    "ifft_estimate",
]


class MissingFrequencyError(ValueError):
    """The sketch does not contain the frequency an estimator needs."""


class UndefinedPhaseError(ValueError):
    """The sketch magnitude is numerically zero: pure background, no phase."""


class NonFiniteLossError(ArithmeticError):
    """A non-finite intermediate appeared in the SMLE objective."""


@dataclass
class FitResult:
    """Outcome of an iterative fit."""

    params: ModelParams
    loss: float
    iterations: int
    converged: bool
    init: ModelParams
    init_method: str = ""
    grad_norm: float = np.nan


@dataclass(frozen=True)
class CoarseHistogram:
    """T fine bins pooled into m_tilde coarse cells of width delta = ceil(T/m_tilde)."""

    T: int
    m_tilde: int
    delta: int
    counts: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())


# ---------------------------------------------------------------------------
# closed-form depth from the fundamental frequency

def circular_mean(sketch: Sketch) -> float:
    """Depth estimate t_hat = (T / 2 pi) * phase(z at index 1), in [0, T).

    The trigonometric sample mean of the stamps; unbiased in the presence of
    uniform background because the background has no component at any nonzero
    orthogonal frequency.
    """
    try:
        z1 = sketch.value_at(1)
    except KeyError as exc:
        raise MissingFrequencyError(
            "circular mean needs the fundamental frequency index 1") from exc
    if abs(z1) < 1e-12:
        raise UndefinedPhaseError(
            "sketch magnitude ~ 0 at the fundamental: pure background")
    return float((sketch.T / (2.0 * np.pi)) * np.angle(z1) % sketch.T)


# ---------------------------------------------------------------------------
# stacked-real covariance and model sketch, with analytic derivatives

class _CFGrid:
    """Model-CF evaluation grid: per-(irf, index-array) constants."""

    __slots__ = ("T", "d", "hh", "om", "nyq", "bg", "has_nyq")

    def __init__(self, irf: ImpulseResponse, indices: np.ndarray):
        T = irf.T
        d = np.asarray(indices, dtype=np.int64) % T
        self.T = T
        self.d = d
        self.hh = irf.h_hat[d]
        c = np.where(2 * d <= T, d, d - T).astype(float)
        self.om = (2.0 * np.pi / T) * c
        self.nyq = (2 * d == T)
        self.has_nyq = bool(self.nyq.any())
        self.bg = (d == 0).astype(float)

    def values(self, alphas, depths):
        out = alphas[0] * self.bg + 0j
        for ak, tk in zip(alphas[1:], depths):
            out = out + ak * self.hh * self._phase(tk)
        return out

    def _phase(self, tk):
        ph = np.exp(1j * self.om * tk)
        if self.has_nyq:
            ph = np.where(self.nyq, np.cos(np.pi * tk) + 0j, ph)
        return ph

    def values_and_grads(self, alphas, depths):
        """CF values and free-parameter derivatives w.r.t. (alpha_1..K, t_1..K).

        alpha_0 = 1 - sum(alpha_k) is eliminated, so d/d alpha_k picks up
        -1 wherever the background contributes (index 0 only).
        """
        K = len(depths)
        val = alphas[0] * self.bg + 0j
        grads = np.zeros((2 * K,) + self.d.shape, dtype=complex)
        for k, (ak, tk) in enumerate(zip(alphas[1:], depths)):
            ph = self._phase(tk)
            dph = 1j * self.om * ph
            if self.has_nyq:
                dph = np.where(self.nyq, -np.pi * np.sin(np.pi * tk) + 0j, dph)
            base = self.hh * ph
            val = val + ak * base
            grads[k] = base - self.bg
            grads[K + k] = ak * self.hh * dph
        return val, grads


class _SketchModel:
    """Workspace shared by covariance / SMLE / FIM evaluations.

    The sketch frequencies are never index 0, so one evaluation of the model
    CF on the frequency grid serves both z_theta and the covariance blocks.
    """

    def __init__(self, irf: ImpulseResponse, freqs: FrequencySet):
        j = freqs.indices
        self.irf = irf
        self.freqs = freqs
        self.m = freqs.m
        self.eye = np.eye(2 * freqs.m)
        self.grid_f = _CFGrid(irf, j)
        self.grid_minus = _CFGrid(irf, (j[:, None] - j[None, :]))
        self.grid_plus = _CFGrid(irf, (j[:, None] + j[None, :]))
        # with every |i +- j| below T/2 the mod-T reduction is inactive and
        # the grid phases factorize from one vector of exponentials
        self.factorizable = bool(2 * (j.max() + j.max()) < irf.T)

    def _cov_blocks(self, Pm, Pp, v):
        m = self.m
        rc, ic = v.real, v.imag
        C = np.empty((2 * m, 2 * m))
        C[:m, :m] = 0.5 * (Pm.real + Pp.real) - np.outer(rc, rc)
        C[m:, m:] = 0.5 * (Pm.real - Pp.real) - np.outer(ic, ic)
        cs = 0.5 * (Pp.imag - Pm.imag) - np.outer(rc, ic)
        C[:m, m:] = cs
        C[m:, :m] = cs.T
        return 0.5 * (C + C.T)

    def _cov_block_grads(self, Pm, Pp, v, dPm, dPp, dv):
        m = self.m
        rc, ic = v.real, v.imag
        drc, dic = dv.real, dv.imag                       # (2K, m)
        out = np.empty((len(dv), 2 * m, 2 * m))
        out[:, :m, :m] = (0.5 * (dPm.real + dPp.real)
                          - drc[:, :, None] * rc[None, None, :]
                          - rc[None, :, None] * drc[:, None, :])
        out[:, m:, m:] = (0.5 * (dPm.real - dPp.real)
                          - dic[:, :, None] * ic[None, None, :]
                          - ic[None, :, None] * dic[:, None, :])
        dcs = (0.5 * (dPp.imag - dPm.imag)
               - drc[:, :, None] * ic[None, None, :]
               - rc[None, :, None] * dic[:, None, :])
        out[:, :m, m:] = dcs
        out[:, m:, :m] = dcs.transpose(0, 2, 1)
        return 0.5 * (out + out.transpose(0, 2, 1))

    def _evaluate(self, alphas, depths, want_grad: bool):
        """Model CF (and free-parameter grads) on the three grids at once,
        through the factorized fast path when available."""
        if not self.factorizable:
            if want_grad:
                return (self.grid_f.values_and_grads(alphas, depths)
                        + self.grid_minus.values_and_grads(alphas, depths)
                        + self.grid_plus.values_and_grads(alphas, depths))
            return (self.grid_f.values(alphas, depths), None,
                    self.grid_minus.values(alphas, depths), None,
                    self.grid_plus.values(alphas, depths), None)
        m, K = self.m, len(depths)
        gf, gm, gp = self.grid_f, self.grid_minus, self.grid_plus
        v = np.zeros(m, dtype=complex)
        Pm = gm.bg * alphas[0] + 0j
        Pp = gp.bg * alphas[0] + 0j
        shape = (2 * K,) if want_grad else ()
        dv = np.zeros(shape + (m,), dtype=complex) if want_grad else None
        dPm = np.zeros(shape + (m, m), dtype=complex) if want_grad else None
        dPp = np.zeros(shape + (m, m), dtype=complex) if want_grad else None
        for k, (ak, tk) in enumerate(zip(alphas[1:], depths)):
            p = np.exp(1j * gf.om * tk)
            base_f = gf.hh * p
            base_m = gm.hh * (p[:, None] * np.conj(p)[None, :])
            base_p = gp.hh * (p[:, None] * p[None, :])
            v += ak * base_f
            Pm += ak * base_m
            Pp += ak * base_p
            if want_grad:
                dv[k] = base_f
                dPm[k] = base_m - gm.bg
                dPp[k] = base_p - gp.bg
                dv[K + k] = 1j * gf.om * (ak * base_f)
                dPm[K + k] = 1j * gm.om * (ak * base_m)
                dPp[K + k] = 1j * gp.om * (ak * base_p)
        return v, dv, Pm, dPm, Pp, dPp

    def pieces(self, alphas, depths, want_grad: bool):
        """(u, J, C, dC): stacked model sketch, its Jacobian, covariance and
        covariance derivatives (J, dC None without want_grad)."""
        v, dv, Pm, dPm, Pp, dPp = self._evaluate(alphas, depths, want_grad)
        u = np.concatenate([v.real, v.imag])
        C = self._cov_blocks(Pm, Pp, v)
        if not want_grad:
            return u, None, C, None
        J = np.concatenate([dv.real, dv.imag], axis=1).T   # (2m, 2K)
        dC = self._cov_block_grads(Pm, Pp, v, dPm, dPp, dv)
        return u, J, C, dC

    def sketch_vector(self, alphas, depths):
        """Model sketch z_theta (background blind by construction)."""
        return self.grid_f.values(alphas, depths)

    def cov(self, alphas, depths):
        v = self.grid_f.values(alphas, depths)
        Pm = self.grid_minus.values(alphas, depths)
        Pp = self.grid_plus.values(alphas, depths)
        return self._cov_blocks(Pm, Pp, v)

    def stacked_and_jacobian(self, alphas, depths):
        v, dv = self.grid_f.values_and_grads(alphas, depths)
        u = np.concatenate([v.real, v.imag])
        J = np.concatenate([dv.real, dv.imag], axis=1).T   # (2m, 2K)
        return u, J


def covariance(params: ModelParams, irf: ImpulseResponse,
               freqs: FrequencySet) -> np.ndarray:
    """Covariance of the stacked features [cos w_j x; sin w_j x] under the model.

    Real symmetric PSD matrix of size 2m x 2m, assembled from model CF values
    via product-to-sum identities with index sums and differences reduced
    modulo T.
    """
    return _SketchModel(irf, freqs).cov(params.alphas, params.depths)


def model_sketch(params: ModelParams, irf: ImpulseResponse,
                 freqs: FrequencySet) -> np.ndarray:
    """Noise-free sketch z_theta = [sum_k alpha_k h_hat(w_j) e^{i w_j t_k}]_j."""
    return _SketchModel(irf, freqs).sketch_vector(params.alphas, params.depths)


def model_sketch_jacobian(params: ModelParams, irf: ImpulseResponse,
                          freqs: FrequencySet):
    """Stacked model sketch and its (2m x 2K) Jacobian w.r.t. the free params."""
    return _SketchModel(irf, freqs).stacked_and_jacobian(params.alphas, params.depths)


def _regularized(C: np.ndarray, eps: float):
    """C + eps * (trace(C)/dim) * I, and the derivative scale for the ridge."""
    dim = C.shape[0]
    scale = eps * np.trace(C) / dim
    return C + scale * np.eye(dim)


def _loss_core(sm: _SketchModel, alphas, depths, z_stacked, n, eps,
               want_grad: bool, weighting="cue", fixed_solve=None):
    m = sm.m
    dim = 2 * m

    if weighting in ("identity", "fixed"):
        if want_grad:
            u, J = sm.stacked_and_jacobian(alphas, depths)
        else:
            v = sm.sketch_vector(alphas, depths)
            u, J = np.concatenate([v.real, v.imag]), None
        r = z_stacked - u
        b = r if weighting == "identity" else fixed_solve(r)
        loss = n * float(r @ b)
        return (loss, None) if not want_grad else (loss, -2.0 * n * (J.T @ b))

    # continuous updating: Sigma re-evaluated at the candidate theta
    u, J, C, dC = sm.pieces(alphas, depths, want_grad)
    r = z_stacked - u
    S = C + (eps * np.trace(C) / dim) * sm.eye
    if not np.all(np.isfinite(S)):
        raise NonFiniteLossError("covariance evaluation is not finite")
    try:
        cho = cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NonFiniteLossError("regularized covariance is not positive definite") from exc
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
    b = cho_solve(cho, r, check_finite=False)
    loss = 0.5 * m * logdet + n * float(r @ b)
    if not np.isfinite(loss):
        raise NonFiniteLossError("SMLE objective evaluated to a non-finite value")
    if not want_grad:
        return loss, None

    Sinv = cho_solve(cho, sm.eye, check_finite=False)
    # dS_l = dC_l + eps*(tr dC_l / dim) I, batched over the 2K parameters
    tr_dC = np.trace(dC, axis1=1, axis2=2)
    ridge = eps * tr_dC / dim
    grad = (0.5 * m * (np.einsum("ij,lji->l", Sinv, dC) + ridge * np.trace(Sinv))
            - 2.0 * n * (J.T @ b)
            - n * (np.einsum("i,lij,j->l", b, dC, b) + ridge * float(b @ b)))
    return loss, np.asarray(grad)


def smle_loss(theta: ModelParams, sketch: Sketch, irf: ImpulseResponse,
              eps: float = 1e-8, n: int | None = None) -> float:
    """SMLE objective at theta (continuous-updating weighting).

    eps sets the ridge Sigma <- Sigma + eps*(trace/2m)*I applied before
    inversion.  Raises NonFiniteLossError on a non-finite intermediate
    (callers treat that as +inf).
    """
    sm = _SketchModel(irf, sketch.freqs)
    loss, _ = _loss_core(sm, theta.alphas, theta.depths, sketch.stacked(),
                         sketch.n if n is None else n, eps, want_grad=False)
    return loss


def smle_loss_grad(theta: ModelParams, sketch: Sketch, irf: ImpulseResponse,
                   eps: float = 1e-8, n: int | None = None):
    """SMLE objective and its analytic gradient w.r.t. (alpha_1..K, t_1..K)."""
    sm = _SketchModel(irf, sketch.freqs)
    return _loss_core(sm, theta.alphas, theta.depths, sketch.stacked(),
                      sketch.n if n is None else n, eps, want_grad=True)


# --- optimizer ---------------------------------------------------------------

def _encode(alphas, depths, T):
    a = np.clip(alphas, 1e-12, None)
    logits = np.log(a[1:] / a[0])
    phis = 2.0 * np.pi * np.asarray(depths) / T
    return np.concatenate([logits, phis])


def _decode(x, K, T):
    logits = np.concatenate([[0.0], x[:K]])
    logits = logits - logits.max()
    e = np.exp(logits)
    alphas = e / e.sum()
    depths = (x[K:] * T / (2.0 * np.pi)) % T
    return alphas, depths


def _chain_grad(g_free, alphas, depths, K, T):
    """Map the free-parameter gradient to (logit, angle) coordinates."""
    g_alpha = g_free[:K]
    g_t = g_free[K:]
    out = np.empty(2 * K)
    for j in range(K):
        aj = alphas[1 + j]
        out[j] = aj * g_alpha[j] - aj * float(g_alpha @ alphas[1:])
    out[K:] = g_t * T / (2.0 * np.pi)
    return out


def _grid_starts(T, K, grid_size):
    pts = (np.arange(grid_size) + 0.5) * T / grid_size
    if K == 1:
        return [np.array([t]) for t in pts]
    starts = []
    for i in range(grid_size):
        for j in range(grid_size):
            if i < j:
                starts.append(np.array([pts[i], pts[j]]))
    return starts


def _lowpass_peak(sketch: Sketch) -> int:
    """Peak of the band-limited histogram reconstruction (any index set)."""
    T = sketch.T
    F = np.zeros(T, dtype=complex)
    F[0] = 1.0
    idx = sketch.freqs.indices
    F[idx] = sketch.z
    missing = np.setdiff1d((T - idx) % T, np.concatenate([[0], idx]))
    F[missing] = np.conj(F[(T - missing) % T])
    return int(np.argmax(np.fft.fft(F).real))


def smle_fit(sketch: Sketch, irf: ImpulseResponse, K: int,
             n: int | None = None, *, weighting: str = "cue",
             init: str = "auto", eps: float = 1e-8, grid_size: int = 16,
             max_iter: int = 500, tol: float = 1e-6) -> FitResult:
    """Minimize the SMLE objective over K surfaces.

    The simplex and circular constraints are enforced by a smooth
    reparameterization (softmax over K+1 logits with the background logit
    pinned at 0; t_k = T * angle / 2 pi).  BFGS with the analytic gradient
    runs until the gradient norm drops below ``tol`` or ``max_iter``
    iterations.

    init:
        "cm"    circular-mean start (K=1 only; needs frequency index 1),
        "grid"  coarse uniform grid over [0, T)^K, start at the smallest loss,
        "auto"  K=1: circular mean, plus a second descent from the band-limited
                histogram peak whenever the two closed-form starts land in
                different basins (the circular mean alone derails at low SBR);
                K>=2: the grid.  The lowest final loss wins.

    weighting: "cue" (default), "identity", "fixed" (Sigma frozen at the
    initial theta) or "two-step" (identity fit, then Sigma frozen at that
    estimate).
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if sketch.m < K:
        raise ValueError(f"sketch of size m={sketch.m} cannot identify K={K} surfaces")
    if weighting not in ("cue", "identity", "fixed", "two-step"):
        raise ValueError(f"unknown weighting {weighting!r}")
    n_eff = sketch.n if n is None else n
    if n_eff < 1:
        raise ValueError("photon count must be at least 1")
    T = sketch.T
    sm = _SketchModel(irf, sketch.freqs)
    z_stacked = sketch.stacked()

    def loss_at(alphas, depths, want_grad, solver=None, mode=weighting):
        return _loss_core(sm, alphas, depths, z_stacked, n_eff, eps,
                          want_grad, weighting=mode, fixed_solve=solver)

    def objective_factory(solver=None, mode="cue"):
        def fun_and_grad(x):
            alphas, depths = _decode(x, K, T)
            try:
                loss, g = loss_at(alphas, depths, True, solver, mode)
            except NonFiniteLossError:
                return np.inf, np.zeros(2 * K)
            return loss, _chain_grad(g, alphas, depths, K, T)
        return fun_and_grad

    def run_local(x0, solver=None, mode="cue"):
        return minimize(objective_factory(solver, mode), x0, jac=True,
                        method="BFGS",
                        options={"gtol": tol, "maxiter": max_iter})

    # --- starting points -----------------------------------------------------
    def moment_alphas():
        j0 = int(sketch.freqs.indices[0])
        a1 = float(np.clip(abs(sketch.z[0]) / max(abs(irf.h_hat[j0]), 1e-6),
                           1e-3, 1 - 1e-3))
        return np.array([1.0 - a1, a1])

    def cm_start():
        if K != 1 or 1 not in sketch.freqs.indices:
            return None
        z1 = sketch.value_at(1)
        if abs(z1) < 1e-12:
            return None
        t0 = (T / (2.0 * np.pi)) * np.angle(z1) % T
        a1 = float(np.clip(abs(z1) / max(abs(irf.h_hat[1]), 1e-6), 1e-3, 1 - 1e-3))
        return np.array([1.0 - a1, a1]), np.array([t0])

    def grid_start():
        a = np.concatenate([[0.2], np.full(K, 0.8 / K)])
        mode = "identity" if weighting == "identity" else "cue"
        best_depths, best_loss = None, np.inf
        for depths in _grid_starts(T, K, grid_size):
            try:
                val, _ = loss_at(a, depths, False, mode=mode)
            except NonFiniteLossError:
                continue
            if val < best_loss:
                best_depths, best_loss = depths, val
        if best_depths is None:
            best_depths = _grid_starts(T, K, grid_size)[0]
        return a, best_depths

    starts = []     # (label, alphas0, depths0)
    cm = cm_start() if init in ("cm", "auto") else None
    if init == "cm" and cm is None:
        raise MissingFrequencyError(
            "circular-mean initialization needs frequency index 1 and |z| > 0")
    if cm is not None:
        starts.append(("circular-mean", cm[0], cm[1]))
    if init == "auto" and K == 1:
        t_lp = float(_lowpass_peak(sketch))
        d = abs(t_lp - cm[1][0]) % T if cm is not None else np.inf
        if cm is None or min(d, T - d) > T / (4.0 * sketch.m):
            starts.append(("lowpass-peak", moment_alphas(), np.array([t_lp])))
    if init == "grid" or (init == "auto" and not starts):
        a0, d0 = grid_start()
        starts.append(("grid", a0, d0))

    # --- weighting variants ---------------------------------------------------
    if weighting in ("cue", "identity"):
        mode_solver = (None, weighting)
    elif weighting == "fixed":
        S0 = _regularized(sm.cov(starts[0][1], starts[0][2]), eps)
        cho0 = cho_factor(S0, lower=True, check_finite=False)
        mode_solver = ((lambda r: cho_solve(cho0, r, check_finite=False)), "fixed")
    else:  # two-step: identity fit, then Sigma frozen at that estimate
        pre = [(lbl, run_local(_encode(a0, d0, T), None, "identity"))
               for lbl, a0, d0 in starts]
        pre.sort(key=lambda lr: lr[1].fun)
        a1, d1 = _decode(pre[0][1].x, K, T)
        S1 = _regularized(sm.cov(a1, d1), eps)
        cho1 = cho_factor(S1, lower=True, check_finite=False)
        mode_solver = ((lambda r: cho_solve(cho1, r, check_finite=False)), "fixed")
        starts = [(pre[0][0], a1, d1)]

    outcomes = [(lbl, a0, d0, run_local(_encode(a0, d0, T), *mode_solver))
                for lbl, a0, d0 in starts]
    outcomes.sort(key=lambda o: (not np.isfinite(o[3].fun), o[3].fun))
    label, a0, d0, res = outcomes[0]
    alphas, depths = _decode(res.x, K, T)
    grad_norm = float(np.linalg.norm(res.jac))
    # gradient norm judged relative to the loss scale: at large n the objective
    # is huge and BFGS stops on line-search precision long before |g| ~ tol
    converged = bool(res.success or grad_norm <= tol * (1.0 + abs(res.fun)))
    return FitResult(params=ModelParams(alphas, depths),
                     loss=float(res.fun),
                     iterations=int(sum(o[3].nit for o in outcomes)),
                     converged=converged,
                     init=ModelParams(a0, d0),
                     init_method=label,
                     grad_norm=grad_norm)


# ---------------------------------------------------------------------------
# coarse binning

def coarse_bin(stream, m_tilde: int, T: int | None = None) -> CoarseHistogram:
    """Pool time stamps into m_tilde cells of width delta = ceil(T / m_tilde).

    Cell j (1-based) covers [(j-1)*delta, j*delta), with the final cell
    absorbing any remainder up to T.
    """
    stamps = getattr(stream, "stamps", None)
    if stamps is None:
        stamps = np.asarray(stream, dtype=np.int64)
        if T is None:
            raise ValueError("T is required when passing raw stamps")
    else:
        T = stream.T
    if not 1 <= m_tilde <= T:
        raise ValueError(f"m_tilde must lie in [1, {T}], got {m_tilde}")
    delta = -(-T // m_tilde)
    counts = np.bincount(stamps // delta, minlength=m_tilde)
    return CoarseHistogram(T=T, m_tilde=m_tilde, delta=delta,
                           counts=counts.astype(np.int64))


def coarse_irf(irf: ImpulseResponse, m_tilde: int) -> np.ndarray:
    """Impulse response aggregated onto the coarse cells (sums to 1)."""
    delta = -(-irf.T // m_tilde)
    edges = np.arange(m_tilde) * delta
    return np.add.reduceat(irf.h, edges)


# ---------------------------------------------------------------------------
# full-data baselines

_LOG_FLOOR = 1e-12


def _log_mf_scores(hist: np.ndarray, logh: np.ndarray) -> np.ndarray:
    # score[t] = sum_s hist[s] * logh[(s - t) mod T], via circular correlation
    return np.fft.ifft(np.fft.fft(hist) * np.conj(np.fft.fft(logh))).real


def matched_filter(hist, irf: ImpulseResponse) -> int:
    """Log matched filter: argmax_t sum_s hist[s] log h((s - t) mod T).

    Zero pulse entries are floored at log(1e-12).  Ties break to the smallest
    shift.
    """
    hist = np.asarray(hist, dtype=float)
    if hist.sum() < 1:
        raise ValueError("cannot match an empty histogram")
    logh = np.log(np.maximum(irf.h, _LOG_FLOOR))
    return int(np.argmax(_log_mf_scores(hist, logh)))


def max_peak(hist) -> int:
    """Position of the largest histogram bin (first index on ties)."""
    return int(np.argmax(np.asarray(hist)))


def coarse_matched_filter(chist: CoarseHistogram, irf: ImpulseResponse) -> float:
    """Matched filter on coarse cells, mapped back to fine bins.

    The pulse is aggregated with the same binning, so the template stays
    anchored at fine position 0 (the cell edge); the cell shift therefore
    maps to t_hat = j_hat * delta, quantizing the depth to multiples of the
    cell width.
    """
    hc = coarse_irf(irf, chist.m_tilde)
    logh = np.log(np.maximum(hc, _LOG_FLOOR))
    j_hat = int(np.argmax(_log_mf_scores(chist.counts.astype(float), logh)))
    return float((j_hat * chist.delta) % chist.T)


def em_fit(hist, irf: ImpulseResponse, K: int, max_iter: int = 200,
           tol: float = 1e-9, on_iteration=None) -> FitResult:
    """EM on the (K+1)-component mixture: K shifted pulses plus background.

    Generalized EM: the E-step computes responsibilities from the current
    parameters; the M-step updates the weights by responsibility mass and
    each depth by the matched-filter argmax of its responsibility-weighted
    histogram.  The observed-data log-likelihood is non-decreasing;
    ``on_iteration`` (if given) receives it after every E-step.

    The loss field carries the final negative log-likelihood.
    """
    hist = np.asarray(hist, dtype=float)
    T = len(hist)
    if T != irf.T:
        raise ValueError("histogram length must equal the pulse length")
    n = hist.sum()
    if K < 1 or n < 1:
        raise ValueError("need K >= 1 and a nonempty histogram")
    logh = np.log(np.maximum(irf.h, _LOG_FLOOR))
    scores = _log_mf_scores(hist, logh)

    # init: top-K matched-filter peaks separated by at least T // (2K) bins
    t = np.zeros(K, dtype=int)
    masked = scores.copy()
    guard = max(1, T // (2 * K))
    for k in range(K):
        t[k] = int(np.argmax(masked))
        lo = np.arange(t[k] - guard, t[k] + guard + 1) % T
        masked[lo] = -np.inf
    alphas = np.concatenate([[0.1], np.full(K, 0.9 / K)])

    comps = np.empty((K, T))
    ll_prev = -np.inf
    converged = False
    it = 0
    init_params = ModelParams(alphas, t.astype(float))
    for it in range(1, max_iter + 1):
        for k in range(K):
            comps[k] = np.roll(irf.h, t[k])
        p = alphas[1:] @ comps + alphas[0] / T
        good = p > 0
        if np.any(hist[~good] > 0):
            break  # data outside the mixture support: likelihood is -inf
        ll = float(hist[good] @ np.log(p[good]))
        if on_iteration is not None:
            on_iteration(ll)
        # E-step
        resp = alphas[1:, None] * comps / np.where(good, p, 1.0)
        resp_bg = (alphas[0] / T) / np.where(good, p, 1.0)
        # M-step
        w = hist * resp
        alphas = np.concatenate([[float(hist @ resp_bg)], w.sum(axis=1)]) / n
        for k in range(K):
            t[k] = int(np.argmax(_log_mf_scores(w[k], logh)))
        if ll - ll_prev < tol * (1.0 + abs(ll)) and it > 1:
            converged = True
            ll_prev = max(ll, ll_prev)
            break
        ll_prev = ll
    return FitResult(params=ModelParams(alphas, t.astype(float)),
                     loss=float(-ll_prev),
                     iterations=it,
                     converged=converged,
                     init=init_params,
                     init_method="matched-filter-peaks")


def coarse_em(chist: CoarseHistogram, irf: ImpulseResponse, K: int,
              max_iter: int = 200, tol: float = 1e-9) -> FitResult:
    """EM on the coarse cells with the aggregated pulse, depths mapped to fine bins."""
    hc = coarse_irf(irf, chist.m_tilde)
    res = em_fit(chist.counts, irf_from_samples(hc), K, max_iter=max_iter, tol=tol)
    fine = (res.params.depths * chist.delta) % chist.T
    params = ModelParams(res.params.alphas, fine)
    return FitResult(params=params, loss=res.loss, iterations=res.iterations,
                     converged=res.converged, init=res.init,
                     init_method=res.init_method)


# ---------------------------------------------------------------------------
# inverse-FFT baseline

def ifft_estimate(sketch: Sketch, irf: ImpulseResponse | None = None,
                  correct_offset: bool = False) -> int:
    """Depth from the zero-padded inverse FFT of a truncated sketch.

    The sketch is embedded into a length-T Fourier vector (DC = 1, conjugate
    symmetry for the unprovided upper half), inverse transformed, and the
    argmax returned: a low-pass approximation of the histogram.

    With ``correct_offset`` the peak position of the equally band-limited
    pulse is subtracted, which removes the bias a long asymmetric pulse
    imprints on the low-pass argmax (requires ``irf``).
    """
    if sketch.freqs.scheme != "truncated":
        raise ValueError("the iFFT readout needs the truncated scheme")
    T = sketch.T

    def lowpass_argmax(values):
        F = np.zeros(T, dtype=complex)
        F[0] = 1.0
        idx = sketch.freqs.indices
        F[idx] = values
        missing = np.setdiff1d((T - idx) % T, np.concatenate([[0], idx]))
        F[missing] = np.conj(F[(T - missing) % T])
        if T % 2 == 0 and T // 2 in idx:
            F[T // 2] = F[T // 2].real
        return int(np.argmax(np.fft.fft(F).real))

    t_hat = lowpass_argmax(sketch.z)
    if correct_offset:
        if irf is None:
            raise ValueError("offset correction needs the impulse response")
        offset = lowpass_argmax(irf.h_hat[sketch.freqs.indices])
        t_hat = (t_hat - offset) % T
    return int(t_hat)
