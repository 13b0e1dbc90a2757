"""Binary and CSV file formats for streams, cubes, sketches and pulses.

All binary formats are little-endian with a 4-byte magic and a u32 version:

stream  "SKL1" | u32 version=1 | u32 T | u64 n | n x u32 stamps
cube    "SKC1" | u32 version=1 | u32 N_r | u32 N_c | u32 T | row-major u32 counts
sketch  "SKZ1" | u32 version=1 | u32 T | u32 m | u8 scheme (0=truncated,
        1=random) | u64 seed (0 if truncated) | u64 n | m x u32 indices |
        m x (f64 re, f64 im)

Malformed input raises :class:`FormatError` naming the byte offset of the
first bad field.  CSV alternatives carry the same metadata in '#' comment
lines.  Pulse files are plain text, one nonnegative value per line.
"""

from __future__ import annotations

import struct

import numpy as np

from .model import ImpulseResponse, irf_from_samples
from .simulate import LidarCube, PhotonStream
from .sketch import FrequencySet, Sketch

__all__ = [
    "FormatError",
    "read_stream", "write_stream", "read_stream_csv", "write_stream_csv",
    "read_cube", "write_cube",
    "read_sketch", "write_sketch", "read_sketch_csv", "write_sketch_csv",
    "read_irf", "write_irf",
]

MAGIC_STREAM = b"SKL1"
MAGIC_CUBE = b"SKC1"
MAGIC_SKETCH = b"SKZ1"


class FormatError(ValueError):
    """A file does not conform to its format; names the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


def _read_exact(f, size: int, what: str) -> bytes:
    offset = f.tell()
    buf = f.read(size)
    if len(buf) != size:
        raise FormatError(f"truncated file while reading {what}", offset)
    return buf


def _expect_magic(f, magic: bytes):
    got = _read_exact(f, 4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", 0)


def _expect_version(f):
    offset = f.tell()
    (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
    if version != 1:
        raise FormatError(f"unsupported version {version}", offset)


# --- photon streams ----------------------------------------------------------

def write_stream(path, stream: PhotonStream) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC_STREAM)
        f.write(struct.pack("<IIQ", 1, stream.T, stream.n))
        f.write(stream.stamps.astype("<u4").tobytes())


def read_stream(path) -> PhotonStream:
    with open(path, "rb") as f:
        _expect_magic(f, MAGIC_STREAM)
        _expect_version(f)
        offset = f.tell()
        T, n = struct.unpack("<IQ", _read_exact(f, 12, "header"))
        if T < 1:
            raise FormatError("T must be positive", offset)
        data_offset = f.tell()
        stamps = np.frombuffer(_read_exact(f, 4 * n, "stamps"), dtype="<u4")
        bad = np.nonzero(stamps >= T)[0]
        if len(bad):
            raise FormatError(f"stamp {stamps[bad[0]]} >= T={T}",
                              data_offset + 4 * int(bad[0]))
        return PhotonStream(T=T, stamps=stamps.astype(np.int64))


def write_stream_csv(path, stream: PhotonStream) -> None:
    with open(path, "w") as f:
        f.write(f"# T={stream.T}\n")
        for x in stream.stamps:
            f.write(f"{int(x)}\n")


def read_stream_csv(path) -> PhotonStream:
    T = None
    stamps = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "T=" in line:
                    T = int(line.split("T=")[1])
                continue
            stamps.append(int(line))
    if T is None:
        raise FormatError("missing '# T=<T>' header line", 0)
    return PhotonStream(T=T, stamps=np.asarray(stamps, dtype=np.int64))


def read_stream_header(path):
    """Validate a stream file header; return (T, n, payload_offset)."""
    with open(path, "rb") as f:
        _expect_magic(f, MAGIC_STREAM)
        _expect_version(f)
        offset = f.tell()
        T, n = struct.unpack("<IQ", _read_exact(f, 12, "header"))
        if T < 1:
            raise FormatError("T must be positive", offset)
        return T, n, f.tell()


def iter_stream_stamps(path, chunk_size: int = 1 << 20):
    """Stream the stamps of a stream file in bounded-memory chunks.

    Yields int64 arrays of at most chunk_size stamps; validates every stamp
    against T, naming the offending byte offset.
    """
    T, n, payload = read_stream_header(path)
    with open(path, "rb") as f:
        f.seek(payload)
        done = 0
        while done < n:
            k = min(chunk_size, n - done)
            buf = _read_exact(f, 4 * k, "stamps")
            stamps = np.frombuffer(buf, dtype="<u4")
            bad = np.nonzero(stamps >= T)[0]
            if len(bad):
                raise FormatError(f"stamp {stamps[bad[0]]} >= T={T}",
                                  payload + 4 * (done + int(bad[0])))
            done += k
            yield stamps.astype(np.int64)


# --- lidar cubes ---------------------------------------------------------------

def write_cube(path, cube: LidarCube) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC_CUBE)
        f.write(struct.pack("<IIII", 1, cube.n_r, cube.n_c, cube.T))
        f.write(cube.counts.astype("<u4").tobytes())


def read_cube(path) -> LidarCube:
    with open(path, "rb") as f:
        _expect_magic(f, MAGIC_CUBE)
        _expect_version(f)
        offset = f.tell()
        n_r, n_c, T = struct.unpack("<III", _read_exact(f, 12, "dimensions"))
        if min(n_r, n_c, T) < 1:
            raise FormatError("cube dimensions must be positive", offset)
        raw = _read_exact(f, 4 * n_r * n_c * T, "counts")
        counts = np.frombuffer(raw, dtype="<u4").reshape(n_r, n_c, T)
        return LidarCube(counts.astype(np.int64))


# --- sketches ------------------------------------------------------------------

_SCHEME_CODE = {"truncated": 0, "random": 1}
_SCHEME_NAME = {v: k for k, v in _SCHEME_CODE.items()}


def write_sketch(path, sketch: Sketch) -> None:
    fs = sketch.freqs
    with open(path, "wb") as f:
        f.write(MAGIC_SKETCH)
        f.write(struct.pack("<IIIBQQ", 1, fs.T, fs.m, _SCHEME_CODE[fs.scheme],
                            fs.seed or 0, sketch.n))
        f.write(fs.indices.astype("<u4").tobytes())
        inter = np.empty(2 * fs.m)
        inter[0::2] = sketch.z.real
        inter[1::2] = sketch.z.imag
        f.write(inter.astype("<f8").tobytes())


def read_sketch(path) -> Sketch:
    with open(path, "rb") as f:
        _expect_magic(f, MAGIC_SKETCH)
        _expect_version(f)
        offset = f.tell()
        T, m, scheme_code, seed, n = struct.unpack(
            "<IIBQQ", _read_exact(f, 25, "header"))
        if scheme_code not in _SCHEME_NAME:
            raise FormatError(f"unknown scheme code {scheme_code}", offset + 8)
        idx_offset = f.tell()
        indices = np.frombuffer(_read_exact(f, 4 * m, "indices"), dtype="<u4")
        if m and (indices.min() < 1 or indices.max() >= T):
            raise FormatError("frequency index out of range [1, T-1]", idx_offset)
        inter = np.frombuffer(_read_exact(f, 16 * m, "values"), dtype="<f8")
        scheme = _SCHEME_NAME[scheme_code]
        fs = FrequencySet(T=T, indices=indices.astype(np.int64), scheme=scheme,
                          seed=None if scheme == "truncated" else int(seed))
        return Sketch(freqs=fs, z=inter[0::2] + 1j * inter[1::2], n=int(n))


def write_sketch_csv(path, sketch: Sketch) -> None:
    fs = sketch.freqs
    with open(path, "w") as f:
        f.write(f"# T={fs.T}\n# m={fs.m}\n# scheme={fs.scheme}\n")
        f.write(f"# seed={fs.seed or 0}\n# n={sketch.n}\n")
        f.write("j, re, im\n")
        for j, z in zip(fs.indices, sketch.z):
            f.write(f"{int(j)}, {float(z.real)!r}, {float(z.imag)!r}\n")


def read_sketch_csv(path) -> Sketch:
    meta = {}
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.lower().startswith("j,") or line.lower().startswith("j, "):
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
                continue
            j, re_, im_ = line.split(",")
            rows.append((int(j), float(re_), float(im_)))
    try:
        T = int(meta["T"])
        scheme = meta["scheme"]
        n = int(meta["n"])
        seed = int(meta.get("seed", 0))
    except KeyError as exc:
        raise FormatError(f"missing metadata line for {exc}", 0) from exc
    fs = FrequencySet(T=T, indices=np.array([r[0] for r in rows]), scheme=scheme,
                      seed=None if scheme == "truncated" else seed)
    z = np.array([r[1] for r in rows]) + 1j * np.array([r[2] for r in rows])
    return Sketch(freqs=fs, z=z, n=n)


# --- impulse responses ----------------------------------------------------------

def read_irf(path, bin_width: float = 1.0) -> ImpulseResponse:
    """Pulse from a text file, one nonnegative value per line (normalized)."""
    values = np.loadtxt(path, dtype=float, ndmin=1)
    return irf_from_samples(values, bin_width=bin_width)


def write_irf(path, irf: ImpulseResponse) -> None:
    np.savetxt(path, irf.h, fmt="%.17g")
