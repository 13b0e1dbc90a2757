"""Seeded Monte-Carlo generation of photon time stamps and lidar cubes.

Sampling is exact inverse-CDF on the discrete model pmf.  All randomness
comes from numpy's PCG64 generator (``np.random.default_rng``).  Streams are
split deterministically with :func:`split_seed`, a SplitMix64 mixing chain,
so per-pixel (and per-trial) generation is order independent and safe to
parallelize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ImpulseResponse, ModelParams, model_pmf

__all__ = [
    "PhotonStream",
    "LidarCube",
    "split_seed",
    "sample_photons",
    "simulate_cube",
]

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # SplitMix64 finalizer (Steele, Lea & Flood constants)
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def split_seed(master: int, *path: int) -> int:
    """Derive an independent 64-bit stream seed from a master seed and a path.

    seed = M(...M(M(master) xor path[0])... xor path[-1]) with M the
    SplitMix64 finalizer.  Used for per-pixel seeds split_seed(seed, i, j)
    and per-trial seeds in the experiment runners.
    """
    s = _mix64(master & _MASK64)
    for p in path:
        s = _mix64(s ^ (p & _MASK64))
    return s


@dataclass(frozen=True)
class PhotonStream:
    """Integer photon time stamps for one pixel, all in [0, T)."""

    T: int
    stamps: np.ndarray

    def __post_init__(self):
        stamps = np.asarray(self.stamps, dtype=np.int64)
        if stamps.size and (stamps.min() < 0 or stamps.max() >= self.T):
            raise ValueError("time stamps must lie in [0, T)")
        stamps = np.ascontiguousarray(stamps)
        stamps.flags.writeable = False
        object.__setattr__(self, "stamps", stamps)

    @property
    def n(self) -> int:
        return len(self.stamps)

    def histogram(self) -> np.ndarray:
        return np.bincount(self.stamps, minlength=self.T)


@dataclass(frozen=True)
class LidarCube:
    """Per-pixel photon counts n[i, j, t] over an N_r x N_c scene."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 3:
            raise ValueError("cube counts must be a 3-D array [N_r][N_c][T]")
        if counts.size and counts.min() < 0:
            raise ValueError("cube counts must be nonnegative")
        counts = np.ascontiguousarray(counts.astype(np.int64))
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def n_r(self) -> int:
        return self.counts.shape[0]

    @property
    def n_c(self) -> int:
        return self.counts.shape[1]

    @property
    def T(self) -> int:
        return self.counts.shape[2]

    def mean_count(self) -> float:
        """Average photon count per pixel."""
        return float(self.counts.sum(axis=2).mean())


def _draw_stamps(pmf: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)


def sample_photons(params: ModelParams, irf: ImpulseResponse, n: int,
                   seed: int) -> PhotonStream:
    """Draw n i.i.d. time stamps from the model pmf (inverse-CDF, PCG64)."""
    if n < 0:
        raise ValueError("photon count must be nonnegative")
    rng = np.random.default_rng(seed)
    return PhotonStream(irf.T, _draw_stamps(model_pmf(params, irf), n, rng))


def simulate_cube(scene, irf: ImpulseResponse, n_bar: float, seed: int,
                  fixed_n: bool = False) -> LidarCube:
    """Simulate a lidar cube from a per-pixel grid of ModelParams.

    Each pixel (i, j) uses its own generator seeded with
    split_seed(seed, i, j); the photon count is drawn Poisson(n_bar) from
    that generator first (or fixed to round(n_bar) when ``fixed_n``), then
    the stamps, so results do not depend on pixel evaluation order.
    """
    if n_bar <= 0:
        raise ValueError("n_bar must be positive")
    n_r = len(scene)
    n_c = len(scene[0])
    counts = np.zeros((n_r, n_c, irf.T), dtype=np.int64)
    pmf_cache: dict[int, np.ndarray] = {}
    for i in range(n_r):
        if len(scene[i]) != n_c:
            raise ValueError("scene rows must all have the same length")
        for j in range(n_c):
            params = scene[i][j]
            pmf = pmf_cache.get(id(params))
            if pmf is None:
                pmf = model_pmf(params, irf)
                pmf_cache[id(params)] = pmf
            rng = np.random.default_rng(split_seed(seed, i, j))
            n = int(round(n_bar)) if fixed_n else int(rng.poisson(n_bar))
            stamps = _draw_stamps(pmf, n, rng)
            counts[i, j] = np.bincount(stamps, minlength=irf.T)
    return LidarCube(counts)
