"""Scripted synthetic experiments: CLT error histograms, REP efficiency
curves, RMSE/detection contour grids, the photon-starved comparison, the
iFFT comparison and the pulse-width comparison.

Each runner takes an :class:`ExperimentConfig`, Monte-Carlo loops with
deterministic per-trial seeds (``split_seed(seed, cell, trial)``) and returns
rows of plain dicts ready for CSV.  Cells (one per grid point) are
independent, so they can be fanned out over a process pool; row order is
fixed by cell index regardless of scheduling.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from functools import partial
from pathlib import Path

import numpy as np

from .analysis import (NonIdentifiableError, circular_distance, circular_mean_std,
                       crb_rmse, detection_rate, fim_coarse, fim_full, fim_sketch)
from .estimate import (coarse_bin, coarse_matched_filter, ifft_estimate,
                       matched_filter, max_peak, smle_fit)
from .model import (ImpulseResponse, ModelParams, gaussian_irf, irf_from_samples,
                    model_pmf, params_from_sbr)
from .simulate import sample_photons, split_seed
from .sketch import (random_frequencies, sketch_from_histogram, sketch_stream,
                     truncated_frequencies)

__all__ = [
    "ExperimentConfig",
    "build_irf",
    "surrogate_irf",
    "compression",
    "run_clt",
    "run_rep",
    "run_contour",
    "run_starved",
    "run_ifft_compare",
    "run_pulse_width",
    "write_csv",
]


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; every key maps to a config-file line
    and to a CLI flag of the same name."""

    experiment: str = ""
    T: int = 250
    irf: str = "gaussian:5"
    K: int = 1
    t1: float = 130.0
    t2: float = 570.0
    split: tuple = (0.75, 0.25)
    sbr: tuple = (1.0,)
    n: tuple = (100,)
    two_m: tuple = (12,)
    scheme: tuple = ("truncated",)
    trials: int = 100
    seed: int = 1
    tolerances: tuple = (10.0, 3.0, 2.0)
    m: int = 2                    # sketch size for the iFFT comparison
    correction: bool = True       # asymmetric offset correction for the iFFT
    grid_size: int = 16
    peak_offset_correction: bool = False
    out_dir: str = "out"
    threads: int = 1
    # simulation-only keys
    rows: int = 0
    cols: int = 0
    n_bar: float = 100.0
    fixed_n: bool = False

    @classmethod
    def from_file(cls, path, overrides=None):
        raw = {}
        with open(path) as f:
            for line in f:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, val = line.partition("=")
                raw[key.strip()] = val.strip()
        if overrides:
            raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw):
        kwargs = {}
        by_name = {f.name: f for f in fields(cls)}
        for key, val in raw.items():
            if key not in by_name:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(val, by_name[key].default)
        return cls(**kwargs)

    def params(self, sbr: float) -> ModelParams:
        if self.K == 1:
            return params_from_sbr(sbr, [self.t1])
        depths = [self.t1, self.t2][: self.K]
        return params_from_sbr(sbr, depths, weights=self.split[: self.K])


def _coerce(val, default):
    if not isinstance(val, str):
        return val
    if isinstance(default, bool):
        return val.lower() in ("1", "true", "yes", "on")
    if isinstance(default, tuple):
        inner = type(default[0]) if default else float
        items = [v.strip() for v in val.split(",") if v.strip()]
        if inner is str:
            return tuple(items)
        if inner is int:
            return tuple(int(float(v)) for v in items)
        return tuple(float(v) for v in items)
    if isinstance(default, int):
        return int(float(val))
    if isinstance(default, float):
        return float(val)
    return val


def _emg(T: int, sigma_frac: float, decay_frac: float) -> np.ndarray:
    t = np.arange(T)
    d = np.minimum(t, T - t)
    core = np.exp(-0.5 * (d / (sigma_frac * T)) ** 2)
    tail = np.exp(-t / (decay_frac * T))
    h = np.fft.ifft(np.fft.fft(core) * np.fft.fft(tail)).real
    return np.clip(h, 0.0, None)


def surrogate_irf(tag: str, T: int) -> ImpulseResponse:
    """Reference pulse shapes for the efficiency experiments.

    short: circular Gaussian, sigma = 0.012*T (CF energy inside the first
    ~10 frequencies).  long: a Gaussian core (0.01*T) convolved with a
    one-sided exponential tail of decay constant 0.08*T, so the CF decays
    slowly and asymmetrically.  head: a measured-system stand-in - sharp
    rise, 0.08*T tail, plus a secondary reflection bump at 0.3*T carrying
    ~3/8 of the mass, the kind of structure a low-pass peak readout cannot
    disambiguate but a model-based fit can.
    """
    if tag == "short":
        return gaussian_irf(0.012 * T, T)
    if tag == "long":
        return irf_from_samples(_emg(T, 0.01, 0.08))
    if tag == "head":
        main = _emg(T, 0.004, 0.08)
        bump = _emg(T, 0.004, 0.03)
        h = main / main.sum() + 0.6 * np.roll(bump / bump.sum(), int(0.3 * T))
        return irf_from_samples(h)
    raise ValueError(f"unknown surrogate pulse tag {tag!r}")


def build_irf(spec: str, T: int) -> ImpulseResponse:
    """Pulse from a config spec: 'gaussian:<sigma>', 'short', 'long', 'head' or 'file:<path>'."""
    if spec.startswith("gaussian:"):
        return gaussian_irf(float(spec.split(":", 1)[1]), T)
    if spec in ("short", "long", "head"):
        return surrogate_irf(spec, T)
    if spec.startswith("file:"):
        from .io import read_irf
        return read_irf(spec.split(":", 1)[1])
    raise ValueError(f"unknown pulse spec {spec!r}")


def compression(two_m: int, T: int, n: float) -> float:
    """Dimension-reduction metric of a 2m-value statistic, max(2m/T, 2m/n)."""
    return max(two_m / T, two_m / n)


def write_csv(path, rows, fieldnames=None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    fieldnames = fieldnames or list(rows[0].keys())
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _map_cells(fn, cells, threads: int):
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def _signed_error(t_hat, t_true, T):
    return (np.asarray(t_hat, dtype=float) - t_true + T / 2) % T - T / 2


# ---------------------------------------------------------------------------
# CLT of the circular-mean error (error histograms per photon count)

def run_clt(cfg: ExperimentConfig):
    """Circular-mean error distributions for growing photon counts.

    Returns (summary_rows, error_rows): per-n empirical vs asymptotic error
    standard deviation and the fraction of errors inside the first tolerance;
    error_rows carry every trial for histogramming.
    """
    T = cfg.T
    irf = build_irf(cfg.irf, T)
    params = cfg.params(cfg.sbr[0])
    pmf = model_pmf(params, irf)
    cdf = np.cumsum(pmf)
    table = np.exp(1j * 2 * np.pi * np.arange(T) / T)
    tol = cfg.tolerances[0]
    summary, errors = [], []
    for ci, n in enumerate(cfg.n):
        errs = np.empty(cfg.trials)
        for trial in range(cfg.trials):
            rng = np.random.default_rng(split_seed(cfg.seed, ci, trial))
            x = np.searchsorted(cdf, rng.random(n), side="right")
            t_hat = (T / (2 * np.pi)) * np.angle(table[x].mean()) % T
            errs[trial] = _signed_error(t_hat, cfg.t1, T)
        pred = circular_mean_std(params, irf, n)
        summary.append({
            "n": n, "trials": cfg.trials,
            "std_empirical": float(np.std(errs)),
            "std_predicted": pred,
            f"frac_within_{tol:g}": detection_rate(np.abs(errs), tol),
        })
        errors.extend({"n": n, "trial": t, "error": float(e)}
                      for t, e in enumerate(errs))
    return summary, errors


# ---------------------------------------------------------------------------
# REP efficiency curves (FIM-based, no Monte-Carlo)

def run_rep(cfg: ExperimentConfig):
    """REP as a function of 2m per scheme and SBR, plus the coarse baseline."""
    T = cfg.T
    irf = build_irf(cfg.irf, T)
    n_ref = 1000.0
    rows = []
    for sbr in cfg.sbr:
        params = cfg.params(sbr)
        full = crb_rmse(fim_full(params, irf, n_ref))
        for scheme in tuple(cfg.scheme) + ("coarse",):
            for two_m in cfg.two_m:
                if scheme == "coarse":
                    try:
                        stat = crb_rmse(fim_coarse(params, irf, two_m, n_ref))
                    except NonIdentifiableError:
                        stat = np.inf
                else:
                    m = two_m // 2
                    if m < 1:
                        continue
                    if scheme == "truncated":
                        freqs = truncated_frequencies(T, m)
                    else:
                        freqs = random_frequencies(T, m, irf,
                                                   seed=split_seed(cfg.seed, m))
                    stat = crb_rmse(fim_sketch(params, irf, freqs, n_ref))
                rows.append({
                    "scheme": scheme, "two_m": two_m, "sbr": sbr,
                    "irf_tag": cfg.irf,
                    "rmse_full": full, "rmse_sketch": stat,
                    "rep": 100.0 * (stat - full) / full,
                })
    return rows


# ---------------------------------------------------------------------------
# synthetic contour grids (RMSE and detection rates vs SBR and 2m)

_CONTOUR_METHODS = ("smle", "ifft", "coarse", "mf", "maxpeak")


def _contour_cell(cfg: ExperimentConfig, cell):
    ci, sbr, n = cell
    T = cfg.T
    irf = build_irf(cfg.irf, T)
    errs = {(two_m, meth): np.empty(cfg.trials)
            for two_m in cfg.two_m for meth in _CONTOUR_METHODS}
    for trial in range(cfg.trials):
        rng = np.random.default_rng(split_seed(cfg.seed, ci, trial))
        t1 = rng.uniform(0, T)
        params = params_from_sbr(sbr, [t1])
        stream = sample_photons(params, irf, n,
                                seed=split_seed(cfg.seed, ci, trial, 1))
        hist = stream.histogram()
        e_mf = circular_distance(matched_filter(hist, irf), t1, T)
        e_max = circular_distance(max_peak(hist), t1, T)
        for two_m in cfg.two_m:
            m = two_m // 2
            freqs = truncated_frequencies(T, m)
            sk = sketch_from_histogram(hist, freqs)
            fit = smle_fit(sk, irf, K=1, grid_size=cfg.grid_size)
            errs[(two_m, "smle")][trial] = circular_distance(
                fit.params.depths[0], t1, T)
            errs[(two_m, "ifft")][trial] = circular_distance(
                ifft_estimate(sk), t1, T)
            t_coarse = coarse_matched_filter(coarse_bin(stream, two_m), irf)
            errs[(two_m, "coarse")][trial] = circular_distance(t_coarse, t1, T)
            errs[(two_m, "mf")][trial] = e_mf
            errs[(two_m, "maxpeak")][trial] = e_max
    # CRB references: circular symmetry makes them independent of t1
    ref = params_from_sbr(sbr, [T / 2.0])
    crb_full = crb_rmse(fim_full(ref, irf, n))
    rows = []
    for two_m in cfg.two_m:
        crb_sk = crb_rmse(fim_sketch(ref, irf, truncated_frequencies(T, two_m // 2), n))
        row = {"sbr": sbr, "n": n, "two_m": two_m, "trials": cfg.trials,
               "compression": compression(two_m, T, n)}
        for meth in _CONTOUR_METHODS:
            e = errs[(two_m, meth)]
            row[f"rmse_{meth}"] = float(np.sqrt(np.mean(e ** 2)))
            for tol in cfg.tolerances:
                row[f"det{tol:g}_{meth}"] = detection_rate(e, tol)
        row["crb_full"] = crb_full
        row["crb_sketch"] = crb_sk
        rows.append(row)
    return rows


def run_contour(cfg: ExperimentConfig):
    """Monte-Carlo RMSE / detection grids over (SBR, n, 2m), truncated scheme."""
    cells = [(ci, sbr, n)
             for ci, (sbr, n) in enumerate(
                 (s, n) for s in cfg.sbr for n in cfg.n)]
    out = _map_cells(partial(_contour_cell, cfg), cells, cfg.threads)
    return [row for cell_rows in out for row in cell_rows]


# ---------------------------------------------------------------------------
# photon-starved regime (sketch size tied to the photon count)

def _starved_cell(cfg: ExperimentConfig, cell):
    ci, sbr, n = cell
    T = cfg.T
    irf = build_irf(cfg.irf, T)
    m = max(1, -(-n // 2))            # 2m = n, rounded up for odd counts
    freqs = truncated_frequencies(T, m)
    e_sk = np.empty(cfg.trials)
    e_mf = np.empty(cfg.trials)
    e_max = np.empty(cfg.trials)
    for trial in range(cfg.trials):
        rng = np.random.default_rng(split_seed(cfg.seed, ci, trial))
        t1 = float(rng.integers(0, T))
        params = params_from_sbr(sbr, [t1])
        stream = sample_photons(params, irf, n,
                                seed=split_seed(cfg.seed, ci, trial, 1))
        hist = stream.histogram()
        fit = smle_fit(sketch_from_histogram(hist, freqs), irf, K=1,
                       grid_size=cfg.grid_size)
        e_sk[trial] = circular_distance(fit.params.depths[0], t1, T)
        e_mf[trial] = circular_distance(matched_filter(hist, irf), t1, T)
        e_max[trial] = circular_distance(max_peak(hist), t1, T)
    r_sk = float(np.sqrt(np.mean(e_sk ** 2)))
    r_mf = float(np.sqrt(np.mean(e_mf ** 2)))
    return {"sbr": sbr, "n": n, "two_m": 2 * m, "trials": cfg.trials,
            "rmse_smle": r_sk, "rmse_mf": r_mf,
            "rmse_maxpeak": float(np.sqrt(np.mean(e_max ** 2))),
            "ratio": r_sk / r_mf if r_mf > 0 else np.nan}


def run_starved(cfg: ExperimentConfig):
    """RMSE ratio sketch/matched-filter over (SBR, n) with 2m tied to n."""
    cells = [(ci, sbr, n)
             for ci, (sbr, n) in enumerate(
                 (s, n) for s in cfg.sbr for n in cfg.n)]
    return _map_cells(partial(_starved_cell, cfg), cells, cfg.threads)


# ---------------------------------------------------------------------------
# iFFT comparison on an asymmetric pulse

def _ifft_cell(cfg: ExperimentConfig, cell):
    ci, sbr, n = cell
    T = cfg.T
    irf = build_irf(cfg.irf, T)
    freqs = truncated_frequencies(T, cfg.m)
    e_sk = np.empty(cfg.trials)
    e_ifft = np.empty(cfg.trials)
    for trial in range(cfg.trials):
        rng = np.random.default_rng(split_seed(cfg.seed, ci, trial))
        t1 = float(rng.integers(0, T))
        params = params_from_sbr(sbr, [t1])
        stream = sample_photons(params, irf, n,
                                seed=split_seed(cfg.seed, ci, trial, 1))
        sk = sketch_stream(stream, freqs)
        fit = smle_fit(sk, irf, K=1, grid_size=cfg.grid_size)
        e_sk[trial] = circular_distance(fit.params.depths[0], t1, T)
        e_ifft[trial] = circular_distance(
            ifft_estimate(sk, irf, correct_offset=cfg.correction), t1, T)
    r_sk = float(np.sqrt(np.mean(e_sk ** 2)))
    r_if = float(np.sqrt(np.mean(e_ifft ** 2)))
    return {"sbr": sbr, "n": n, "two_m": 2 * cfg.m, "trials": cfg.trials,
            "rmse_smle": r_sk, "rmse_ifft": r_if,
            "ratio": r_sk / r_if if r_if > 0 else np.nan}


def run_ifft_compare(cfg: ExperimentConfig):
    """RMSE ratio sketched SMLE / iFFT over (SBR, n) at fixed m."""
    cells = [(ci, sbr, n)
             for ci, (sbr, n) in enumerate(
                 (s, n) for s in cfg.sbr for n in cfg.n)]
    return _map_cells(partial(_ifft_cell, cfg), cells, cfg.threads)


# ---------------------------------------------------------------------------
# wide vs narrow pulse width under equal compression

def _pulse_width_cell(cfg: ExperimentConfig, cell):
    ci, sbr = cell
    T = cfg.T
    n = cfg.n[0]
    two_m = cfg.two_m[0]
    m = two_m // 2
    narrow = build_irf(cfg.irf, T)
    wide = gaussian_irf(0.4 * T, T)   # width quoted as a fraction of the range
    freqs = truncated_frequencies(T, m)
    e_sk = np.empty(cfg.trials)
    e_cn = np.empty(cfg.trials)
    e_cw = np.empty(cfg.trials)
    for trial in range(cfg.trials):
        rng = np.random.default_rng(split_seed(cfg.seed, ci, trial))
        t1 = rng.uniform(0, T)
        params = params_from_sbr(sbr, [t1])
        s_narrow = sample_photons(params, narrow, n,
                                  seed=split_seed(cfg.seed, ci, trial, 1))
        s_wide = sample_photons(params, wide, n,
                                seed=split_seed(cfg.seed, ci, trial, 2))
        fit = smle_fit(sketch_stream(s_narrow, freqs), narrow, K=1,
                       grid_size=cfg.grid_size)
        e_sk[trial] = circular_distance(fit.params.depths[0], t1, T)
        e_cn[trial] = circular_distance(
            coarse_matched_filter(coarse_bin(s_narrow, two_m), narrow), t1, T)
        e_cw[trial] = circular_distance(
            coarse_matched_filter(coarse_bin(s_wide, two_m), wide), t1, T)
    return {"sbr": sbr, "n": n, "two_m": two_m, "trials": cfg.trials,
            "rmse_smle": float(np.sqrt(np.mean(e_sk ** 2))),
            "rmse_coarse_narrow": float(np.sqrt(np.mean(e_cn ** 2))),
            "rmse_coarse_wide": float(np.sqrt(np.mean(e_cw ** 2)))}


def run_pulse_width(cfg: ExperimentConfig):
    """SMLE vs coarse binning with narrow and widened pulses, equal 2m."""
    cells = list(enumerate(cfg.sbr))
    return _map_cells(partial(_pulse_width_cell, cfg), cells, cfg.threads)
