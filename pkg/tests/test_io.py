import numpy as np
import pytest

from sketchlidar.io import (FormatError, read_cube, read_irf, read_sketch,
                            read_sketch_csv, read_stream, read_stream_csv,
                            write_cube, write_irf, write_sketch,
                            write_sketch_csv, write_stream, write_stream_csv)
from sketchlidar.model import gaussian_irf, params_from_sbr
from sketchlidar.simulate import LidarCube, PhotonStream, sample_photons, simulate_cube
from sketchlidar.sketch import random_frequencies, sketch_stream, truncated_frequencies


@pytest.fixture
def stream():
    irf = gaussian_irf(5.0, 250)
    return sample_photons(params_from_sbr(2.0, [99.5]), irf, 1000, seed=1)


def roundtrip_bytes(tmp_path, write, read, obj, name):
    p1 = tmp_path / f"{name}_1.bin"
    p2 = tmp_path / f"{name}_2.bin"
    write(p1, obj)
    back = read(p1)
    write(p2, back)
    assert p1.read_bytes() == p2.read_bytes()
    return back


class TestStreamFormat:
    def test_roundtrip_byte_identical(self, tmp_path, stream):
        back = roundtrip_bytes(tmp_path, write_stream, read_stream, stream, "s")
        assert back.T == stream.T
        assert np.array_equal(back.stamps, stream.stamps)

    def test_bad_magic_offset_zero(self, tmp_path, stream):
        p = tmp_path / "s.bin"
        write_stream(p, stream)
        raw = bytearray(p.read_bytes())
        raw[:4] = b"XXXX"
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            read_stream(p)
        assert err.value.offset == 0
        assert "offset 0" in str(err.value)

    def test_bad_version_offset(self, tmp_path, stream):
        p = tmp_path / "s.bin"
        write_stream(p, stream)
        raw = bytearray(p.read_bytes())
        raw[4] = 9
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            read_stream(p)
        assert err.value.offset == 4

    def test_truncated_payload(self, tmp_path, stream):
        p = tmp_path / "s.bin"
        write_stream(p, stream)
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FormatError):
            read_stream(p)

    def test_stamp_out_of_range_names_offset(self, tmp_path):
        p = tmp_path / "s.bin"
        write_stream(p, PhotonStream(100, np.array([1, 2, 3])))
        raw = bytearray(p.read_bytes())
        # corrupt the second stamp (header is 4+4+4+8 = 20 bytes)
        raw[24:28] = (1000).to_bytes(4, "little")
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            read_stream(p)
        assert err.value.offset == 24

    def test_csv_roundtrip(self, tmp_path, stream):
        p = tmp_path / "s.csv"
        write_stream_csv(p, stream)
        back = read_stream_csv(p)
        assert back.T == stream.T
        assert np.array_equal(back.stamps, stream.stamps)


class TestCubeFormat:
    def test_roundtrip_byte_identical(self, tmp_path):
        irf = gaussian_irf(3.0, 64)
        scene = [[params_from_sbr(4.0, [20.0])] * 3 for _ in range(2)]
        cube = simulate_cube(scene, irf, n_bar=25, seed=2)
        back = roundtrip_bytes(tmp_path, write_cube, read_cube, cube, "c")
        assert np.array_equal(back.counts, cube.counts)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "c.bin"
        write_cube(p, LidarCube(np.zeros((1, 1, 4), dtype=np.int64)))
        raw = bytearray(p.read_bytes())
        raw[0] = 0
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            read_cube(p)
        assert err.value.offset == 0

    def test_truncated_counts(self, tmp_path):
        p = tmp_path / "c.bin"
        write_cube(p, LidarCube(np.ones((2, 2, 8), dtype=np.int64)))
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(FormatError):
            read_cube(p)


class TestSketchFormat:
    def test_roundtrip_truncated(self, tmp_path, stream):
        sk = sketch_stream(stream, truncated_frequencies(250, 8))
        back = roundtrip_bytes(tmp_path, write_sketch, read_sketch, sk, "z")
        assert back.freqs == sk.freqs
        assert back.n == sk.n
        np.testing.assert_array_equal(back.z, sk.z)

    def test_roundtrip_random_scheme(self, tmp_path, stream):
        irf = gaussian_irf(5.0, 250)
        fs = random_frequencies(250, 6, irf, seed=99)
        sk = sketch_stream(stream, fs)
        back = roundtrip_bytes(tmp_path, write_sketch, read_sketch, sk, "zr")
        assert back.freqs.scheme == "random"
        assert back.freqs.seed == 99
        np.testing.assert_array_equal(back.freqs.indices, fs.indices)

    def test_bad_scheme_code(self, tmp_path, stream):
        p = tmp_path / "z.bin"
        write_sketch(p, sketch_stream(stream, truncated_frequencies(250, 3)))
        raw = bytearray(p.read_bytes())
        raw[16] = 7     # scheme byte sits after magic(4) version(4) T(4) m(4)
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_sketch(p)

    def test_csv_roundtrip(self, tmp_path, stream):
        sk = sketch_stream(stream, truncated_frequencies(250, 5))
        p = tmp_path / "z.csv"
        write_sketch_csv(p, sk)
        back = read_sketch_csv(p)
        assert back.freqs == sk.freqs and back.n == sk.n
        np.testing.assert_array_equal(back.z, sk.z)


def test_irf_text_roundtrip(tmp_path):
    irf = gaussian_irf(4.0, 128)
    p = tmp_path / "irf.txt"
    write_irf(p, irf)
    back = read_irf(p)
    np.testing.assert_allclose(back.h, irf.h, atol=1e-15)
