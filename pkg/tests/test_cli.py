import numpy as np

from sketchlidar.cli import main
from sketchlidar.io import read_cube, read_sketch
from sketchlidar.sketch import sketch_from_histogram, truncated_frequencies


def run(*argv):
    return main([str(a) for a in argv])


class TestSimulate:
    def test_stream_byte_identical_rerun(self, tmp_path):
        a, b = tmp_path / "a.skl", tmp_path / "b.skl"
        for out in (a, b):
            assert run("simulate", "--T", 250, "--irf", "gaussian:5",
                       "--t1", 99, "--sbr", 2, "--n", 500, "--seed", 7,
                       "--out", out, "--out-dir", tmp_path) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_cube_header_echoes_config(self, tmp_path, capsys):
        out = tmp_path / "cube.skc"
        assert run("simulate", "--T", 153, "--irf", "gaussian:3",
                   "--t1", 60, "--sbr", "2.35", "--rows", 32, "--cols", 32,
                   "--n-bar", 871, "--seed", 3, "--out", out) == 0
        cube = read_cube(out)
        assert (cube.n_r, cube.n_c, cube.T) == (32, 32, 153)
        assert abs(cube.mean_count() - 871) < 5 * np.sqrt(871 / 1024)

    def test_invalid_path_no_partial_file(self, tmp_path, capsys):
        target = tmp_path / "missing_dir_that_cannot_be_made" / "x" / "s.skl"
        # make the parent an unwritable *file* so mkdir fails cleanly
        blocker = tmp_path / "missing_dir_that_cannot_be_made"
        blocker.write_text("")
        code = run("simulate", "--T", 64, "--irf", "gaussian:2", "--t1", 5,
                   "--n", 10, "--out", target)
        assert code != 0
        assert not target.exists()


class TestSketch:
    def make_stream(self, tmp_path, stamps, T):
        from sketchlidar.io import write_stream
        from sketchlidar.simulate import PhotonStream
        p = tmp_path / "s.skl"
        write_stream(p, PhotonStream(T, np.asarray(stamps)))
        return p

    def test_uniform_stream_zero_sketch(self, tmp_path):
        p = self.make_stream(tmp_path, np.arange(64), 64)
        out = tmp_path / "z.skz"
        assert run("sketch", p, "--m", 5, "--out", out) == 0
        sk = read_sketch(out)
        assert np.all(np.abs(sk.z) < 1e-12)

    def test_matches_library_finalize(self, tmp_path):
        rng = np.random.default_rng(1)
        stamps = rng.integers(0, 250, 3000)
        p = self.make_stream(tmp_path, stamps, 250)
        out = tmp_path / "z.skz"
        assert run("sketch", p, "--m", 8, "--out", out, "--chunk", 256) == 0
        sk = read_sketch(out)
        want = sketch_from_histogram(np.bincount(stamps, minlength=250),
                                     truncated_frequencies(250, 8))
        np.testing.assert_allclose(sk.z, want.z, atol=1e-12)

    def test_m_out_of_range_cites_bounds(self, tmp_path, capsys):
        p = self.make_stream(tmp_path, [1, 2, 3], 64)
        assert run("sketch", p, "--m", 64, "--out", tmp_path / "z.skz") != 0
        assert "[1, T-1]" in capsys.readouterr().err

    def test_cube_one_sketch_per_pixel(self, tmp_path):
        cube = tmp_path / "c.skc"
        assert run("simulate", "--T", 64, "--irf", "gaussian:2", "--t1", 20,
                   "--sbr", 5, "--rows", 2, "--cols", 3, "--n-bar", 50,
                   "--seed", 4, "--out", cube) == 0
        out_dir = tmp_path / "sk"
        assert run("sketch", cube, "--m", 4, "--out", out_dir) == 0
        assert len(list(out_dir.glob("sketch_*.skz"))) == 6


class TestFit:
    def simulate_stream(self, tmp_path, **kw):
        out = tmp_path / "s.skl"
        argv = ["simulate", "--out", out]
        for k, v in kw.items():
            argv += [f"--{k.replace('_', '-')}", v]
        assert run(*argv) == 0
        return out

    def test_smle_recovers_depth(self, tmp_path):
        stream = self.simulate_stream(tmp_path, T=250, irf="gaussian:5",
                                      t1=130, sbr=1000000, n=10000, seed=2)
        skz = tmp_path / "z.skz"
        assert run("sketch", stream, "--m", 5, "--out", skz) == 0
        out = tmp_path / "fit.csv"
        assert run("fit", skz, "--method", "smle", "--K", 1,
                   "--irf", "gaussian:5", "--out", out) == 0
        row = out.read_text().splitlines()[1].split(",")
        header = out.read_text().splitlines()[0].split(",")
        t_hat = float(row[header.index("t_1")])
        assert abs(t_hat - 130.0) < 0.1

    def test_mf_and_em_agree_without_background(self, tmp_path):
        stream = self.simulate_stream(tmp_path, T=250, irf="gaussian:5",
                                      t1=77, sbr=1000000, n=2000, seed=6)
        mf_csv, em_csv = tmp_path / "mf.csv", tmp_path / "em.csv"
        assert run("fit", stream, "--method", "matched-filter",
                   "--irf", "gaussian:5", "--out", mf_csv) == 0
        assert run("fit", stream, "--method", "em", "--K", 1,
                   "--irf", "gaussian:5", "--out", em_csv) == 0

        def depth(path):
            header, row = [l.split(",") for l in path.read_text().splitlines()[:2]]
            return float(row[header.index("t_1")])

        assert depth(mf_csv) == depth(em_csv)

    def test_missing_input(self, tmp_path):
        assert run("fit", tmp_path / "nope.skz", "--method", "smle",
                   "--irf", "gaussian:5") != 0

    def test_incompatible_method_and_input(self, tmp_path):
        stream = self.simulate_stream(tmp_path, T=64, irf="gaussian:2",
                                      t1=10, sbr=5, n=100, seed=1)
        assert run("fit", stream, "--method", "smle",
                   "--irf", "gaussian:2") != 0


class TestExperiments:
    def test_contour_deterministic(self, tmp_path):
        args = ["contour", "--T", 64, "--irf", "gaussian:2", "--sbr", 1,
                "--n", 50, "--two-m", 8, "--trials", 2, "--seed", 5,
                "--tolerances", "10,3", "--no-plot"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(*args, "--out-dir", out1) == 0
        assert run(*args, "--out-dir", out2) == 0
        assert (out1 / "contour.csv").read_text() == (out2 / "contour.csv").read_text()

    def test_rep_structure_and_sign(self, tmp_path):
        assert run("rep", "--T", 500, "--irf", "gaussian:10", "--t1", 430,
                   "--sbr", "1,10", "--two-m", "2,8,20",
                   "--scheme", "truncated,random", "--seed", 1,
                   "--out-dir", tmp_path, "--no-plot") == 0
        lines = (tmp_path / "rep.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header[:4] == ["scheme", "two_m", "sbr", "irf_tag"]
        # truncated + random + coarse, 3 two_m values, 2 SBRs
        assert len(lines) - 1 == 3 * 3 * 2
        rep_i = header.index("rep")
        for row in lines[1:]:
            assert float(row.split(",")[rep_i]) >= -0.01

    def test_starved_smoke(self, tmp_path):
        assert run("starved", "--T", 64, "--irf", "gaussian:2",
                   "--sbr", "1", "--n", "3,5", "--trials", 2, "--seed", 2,
                   "--out-dir", tmp_path, "--no-plot") == 0
        lines = (tmp_path / "starved.csv").read_text().splitlines()
        assert lines[0].startswith("sbr,n,two_m")
        assert len(lines) == 3

    def test_ifft_compare_smoke(self, tmp_path):
        assert run("ifft-compare", "--T", 128, "--irf", "long", "--m", 2,
                   "--sbr", "1", "--n", "50", "--trials", 2, "--seed", 3,
                   "--out-dir", tmp_path, "--no-plot") == 0
        assert (tmp_path / "ifft_compare.csv").exists()

    def test_config_file_with_override(self, tmp_path):
        cfg = tmp_path / "my.cfg"
        cfg.write_text("experiment = clt\nT = 200\nirf = gaussian:5\n"
                       "t1 = 50\nsbr = 1\nn = 20\ntrials = 5\nseed = 9\n"
                       "tolerances = 5\n")
        assert run("clt", "--config", cfg, "--trials", 3,
                   "--out-dir", tmp_path, "--no-plot") == 0
        lines = (tmp_path / "clt_summary.csv").read_text().splitlines()
        assert "3" in lines[1].split(",")[1]   # trials overridden to 3

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("experiment = clt\nbogus_key = 1\n")
        assert run("clt", "--config", cfg, "--out-dir", tmp_path,
                   "--no-plot") != 0


def test_streaming_sketch_bounded_memory(tmp_path):
    # a 10^7-photon stream (~40 MB) processed in 1 MiB chunks must not be
    # loaded wholesale
    import struct
    import tracemalloc

    path = tmp_path / "big.skl"
    T, n = 1000, 10 ** 7
    rng = np.random.default_rng(0)
    with open(path, "wb") as f:
        f.write(b"SKL1")
        f.write(struct.pack("<IIQ", 1, T, n))
        for _ in range(10):
            f.write(rng.integers(0, T, n // 10, dtype=np.uint32)
                    .astype("<u4").tobytes())
    out = tmp_path / "big.skz"
    tracemalloc.start()
    assert run("sketch", path, "--m", 10, "--out", out,
               "--chunk", 1 << 18) == 0
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert peak < 100 * 1024 * 1024
    sk = read_sketch(out)
    assert sk.n == n
