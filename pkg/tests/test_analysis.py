import numpy as np
import pytest

from sketchlidar.analysis import (NonIdentifiableError, circular_distance,
                                  circular_mean_std, crb_rmse, detection_rate,
                                  efficiency_report, fim_coarse, fim_full,
                                  fim_sketch, rep, rep_coarse, rmse, rmse_ratio)
from sketchlidar.estimate import model_sketch_jacobian
from sketchlidar.model import ModelParams, gaussian_irf, model_pmf, params_from_sbr
from sketchlidar.simulate import sample_photons
from sketchlidar.sketch import truncated_frequencies


def random_single_peak(rng, T):
    a1 = rng.uniform(0.2, 0.95)
    return ModelParams([1 - a1, a1], [rng.uniform(0, T)])


class TestFimFull:
    def test_symmetric_psd_random_theta(self):
        rng = np.random.default_rng(1)
        irf = gaussian_irf(5.0, 250)
        for _ in range(50):
            I = fim_full(random_single_peak(rng, 250), irf, 100)
            assert np.max(np.abs(I - I.T)) < 1e-10
            w = np.linalg.eigvalsh(I)
            assert w.min() >= -1e-8 * max(w.max(), 1.0)

    def test_linear_in_n(self):
        irf = gaussian_irf(5.0, 250)
        p = params_from_sbr(4.0, [99.0])
        np.testing.assert_allclose(fim_full(p, irf, 200), 2 * fim_full(p, irf, 100),
                                   rtol=1e-12)

    def test_empirical_fisher_oracle(self):
        # score outer product over 1e6 samples, scores by central differences
        T = 250
        irf = gaussian_irf(5.0, T)
        p = ModelParams([0.1, 0.9], [430.0 % T])
        n = 10 ** 6
        hist = sample_photons(p, irf, n, seed=77).histogram()
        h = 1e-5
        a1, t1 = p.alphas[1], p.depths[0]
        lp = {}
        for da, dt in [(h, 0), (-h, 0), (0, h), (0, -h)]:
            q = model_pmf(ModelParams([1 - a1 - da, a1 + da], [t1 + dt]), irf)
            lp[(da, dt)] = np.log(q)
        score = np.vstack([(lp[(h, 0)] - lp[(-h, 0)]) / (2 * h),
                           (lp[(0, h)] - lp[(0, -h)]) / (2 * h)])
        emp = np.einsum("ix,jx->ij", score * hist, score) / n
        want = fim_full(p, irf, 1.0)
        # entries judged on the natural covariance scale sqrt(I_ii * I_jj)
        # (the cross term is analytically zero here)
        scale = np.sqrt(np.outer(np.diag(want), np.diag(want)))
        assert np.all(np.abs(emp - want) <= 0.05 * scale)


class TestFimSketch:
    def test_symmetric_psd_random_theta(self):
        rng = np.random.default_rng(2)
        irf = gaussian_irf(5.0, 250)
        fs = truncated_frequencies(250, 8)
        for _ in range(50):
            I = fim_sketch(random_single_peak(rng, 250), irf, fs, 100)
            assert np.max(np.abs(I - I.T)) < 1e-10
            w = np.linalg.eigvalsh(I)
            assert w.min() >= -1e-8 * max(w.max(), 1.0)

    def test_jacobian_matches_central_differences(self):
        T = 250
        irf = gaussian_irf(5.0, T)
        fs = truncated_frequencies(T, 6)
        p = params_from_sbr(3.0, [180.0])
        _, J = model_sketch_jacobian(p, irf, fs)
        h = 1e-6
        a1, t1 = p.alphas[1], p.depths[0]

        def u(a, t):
            return model_sketch_jacobian(ModelParams([1 - a, a], [t]), irf, fs)[0]

        fd = np.column_stack([(u(a1 + h, t1) - u(a1 - h, t1)) / (2 * h),
                              (u(a1, t1 + h) - u(a1, t1 - h)) / (2 * h)])
        assert np.max(np.abs(J - fd)) < 1e-6

    def test_full_basis_information_completeness(self):
        T = 250
        irf = gaussian_irf(5.0, T)
        p = ModelParams([0.5, 0.5], [430.0 % T])
        full = crb_rmse(fim_full(p, irf, 1000))
        sk = crb_rmse(fim_sketch(p, irf, truncated_frequencies(T, T - 1), 1000))
        assert abs(sk - full) / full < 0.01


class TestCrbRmse:
    def test_diagonal_example(self):
        assert crb_rmse(np.diag([4.0, 25.0])) == pytest.approx(np.sqrt(0.29))

    def test_n_scaling(self):
        irf = gaussian_irf(5.0, 250)
        p = params_from_sbr(4.0, [99.0])
        r1 = crb_rmse(fim_full(p, irf, 100))
        r4 = crb_rmse(fim_full(p, irf, 400))
        assert r4 == pytest.approx(r1 / 2, rel=1e-10)

    def test_nested_frequency_monotonicity(self):
        rng = np.random.default_rng(3)
        T = 250
        irf = gaussian_irf(5.0, T)
        for _ in range(20):
            p = random_single_peak(rng, T)
            rms = [crb_rmse(fim_sketch(p, irf, truncated_frequencies(T, m), 100))
                   for m in range(1, 21)]
            assert all(rms[i + 1] <= rms[i] * (1 + 1e-8) for i in range(19))

    def test_singular_fim_rejected(self):
        with pytest.raises(NonIdentifiableError):
            crb_rmse(np.zeros((2, 2)))


class TestRep:
    def test_full_basis_near_lossless(self):
        T = 250
        irf = gaussian_irf(5.0, T)
        p = params_from_sbr(1.0, [99.0])
        assert rep(p, irf, truncated_frequencies(T, T - 1)) < 1.0

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        irf = gaussian_irf(5.0, 250)
        for _ in range(20):
            p = random_single_peak(rng, 250)
            fs = truncated_frequencies(250, int(rng.integers(1, 30)))
            assert rep(p, irf, fs) >= -0.01

    def test_n_invariance(self):
        # REP via FIMs at two very different n must agree
        T = 250
        irf = gaussian_irf(5.0, T)
        p = params_from_sbr(10.0, [107.0])
        fs = truncated_frequencies(T, 6)

        def rep_at(n):
            full = crb_rmse(fim_full(p, irf, n))
            sk = crb_rmse(fim_sketch(p, irf, fs, n))
            return 100 * (sk - full) / full

        assert abs(rep_at(100) - rep_at(10 ** 5)) <= 1e-8 * abs(rep_at(100))

    def test_efficiency_report_consistency(self):
        T = 250
        irf = gaussian_irf(5.0, T)
        p = params_from_sbr(10.0, [107.0])
        fs = truncated_frequencies(T, 6)
        r = efficiency_report(p, irf, fs)
        assert r.rep == pytest.approx(
            100 * (r.rmse_sketch - r.rmse_full) / r.rmse_full)
        assert r.m == 6 and r.scheme == "truncated"

    def test_coarse_rep_larger_than_sketched(self):
        T = 1000
        irf = gaussian_irf(12.0, T)
        p = params_from_sbr(10.0, [430.0])
        for two_m in (12, 20, 40):
            assert rep_coarse(p, irf, two_m) > rep(
                p, irf, truncated_frequencies(T, two_m // 2))

    def test_coarse_fim_quantization_blindness(self):
        # a pulse buried inside one wide cell carries no depth information
        T = 1000
        irf = gaussian_irf(10.0, T)
        p = params_from_sbr(10.0, [430.0])
        with pytest.raises(NonIdentifiableError):
            crb_rmse(fim_coarse(p, irf, 2, 100))


class TestMetrics:
    def test_rmse_identical(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_rmse_wraparound(self):
        assert rmse([0.0], [99.0], T=100, circular=True) == pytest.approx(1.0)

    def test_rmse_plain(self):
        assert rmse([1.0, 3.0], [2.0, 4.0]) == pytest.approx(1.0)

    def test_rmse_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse([1.0], [1.0, 2.0])

    def test_detection_rate_trivial(self):
        assert detection_rate([0.0, 0.0], 0.0) == 1.0
        assert detection_rate([1.0, 5.0, 20.0], 10.0) == pytest.approx(2 / 3)

    def test_detection_rate_counting_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            errs = rng.uniform(0, 30, size=rng.integers(1, 50))
            tol = float(rng.uniform(0, 30))
            want = sum(1 for e in errs if e <= tol) / len(errs)
            assert detection_rate(errs, tol) == pytest.approx(want)

    def test_rmse_ratio(self):
        assert rmse_ratio(2.0, 2.0) == 1.0
        assert rmse_ratio(2.0, 4.0) == 0.5
        with pytest.raises(ValueError):
            rmse_ratio(1.0, 0.0)

    def test_circular_distance(self):
        assert circular_distance(0, 99, 100) == 1
        assert circular_distance(10, 30, 100) == 20


def test_circular_mean_std_matches_monte_carlo():
    T = 1000
    irf = gaussian_irf(15.0, T)
    p = params_from_sbr(1.0, [320.0])
    pred = circular_mean_std(p, irf, 10 ** 4)
    pmf = model_pmf(p, irf)
    cdf = np.cumsum(pmf)
    table = np.exp(1j * 2 * np.pi * np.arange(T) / T)
    rng = np.random.default_rng(6)
    errs = []
    for _ in range(400):
        x = np.searchsorted(cdf, rng.random(10 ** 4), side="right")
        t_hat = (T / (2 * np.pi)) * np.angle(table[x].mean()) % T
        errs.append((t_hat - 320.0 + T / 2) % T - T / 2)
    assert np.std(errs) == pytest.approx(pred, rel=0.2)
