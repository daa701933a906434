"""Volume I/O tests.

The oracle here is an independent NIfTI-1 header parser/builder working from
the published byte offsets (348-byte header), deliberately not sharing any
code with the implementation's struct layout.
"""

import gzip
import struct

import numpy as np
import pytest

from voxelprompt.errors import BadMagic, DimMismatch, TruncatedData, UnsupportedDatatype
from voxelprompt.nifti import NiftiHeader, Volume, read_nifti, write_nifti


# --- independent oracle: offset-based header access -----------------------

def dump_header(raw: bytes, order: str = "<") -> dict:
    """Parse the fields we care about straight from their documented offsets."""
    u = lambda fmt, off: struct.unpack_from(order + fmt, raw, off)
    return {
        "sizeof_hdr": u("i", 0)[0],
        "dim": u("8h", 40),
        "datatype": u("h", 70)[0],
        "bitpix": u("h", 72)[0],
        "pixdim": u("8f", 76),
        "vox_offset": u("f", 108)[0],
        "scl_slope": u("f", 112)[0],
        "scl_inter": u("f", 116)[0],
        "qform_code": u("h", 252)[0],
        "sform_code": u("h", 254)[0],
        "quatern": u("3f", 256),
        "qoffset": u("3f", 268),
        "srow": np.array(u("12f", 280)).reshape(3, 4),
        "magic": u("4s", 344)[0],
    }


def build_nifti_bytes(
    data: np.ndarray,
    order: str = "<",
    sform: np.ndarray | None = None,
    sform_code: int = 0,
    qform_code: int = 0,
    quatern=(0.0, 0.0, 0.0),
    qoffset=(0.0, 0.0, 0.0),
    pixdim=(1.0, 1.0, 1.0),
    qfac: float = 1.0,
    scl_slope: float = 0.0,
    scl_inter: float = 0.0,
    datatype: int | None = None,
    magic: bytes = b"n+1\x00",
) -> bytes:
    """Assemble a single-file NIfTI-1 stream by poking fields at offsets."""
    hdr = bytearray(352)
    p = lambda fmt, off, *vals: struct.pack_into(order + fmt, hdr, off, *vals)
    p("i", 0, 348)
    p("8h", 40, 3, *data.shape, 1, 1, 1, 1)
    code = datatype if datatype is not None else {np.int16: 4, np.float32: 16}[data.dtype.type]
    p("h", 70, code)
    p("h", 72, {4: 16, 16: 32}.get(code, 0))
    p("8f", 76, qfac, *pixdim, 0, 0, 0, 0)
    p("f", 108, 352.0)
    p("f", 112, scl_slope)
    p("f", 116, scl_inter)
    p("h", 252, qform_code)
    p("h", 254, sform_code)
    p("3f", 256, *quatern)
    p("3f", 268, *qoffset)
    if sform is not None:
        p("12f", 280, *np.asarray(sform)[:3, :].flatten())
    struct.pack_into("4s", hdr, 344, magic)
    payload = data.astype(data.dtype.newbyteorder(order)).tobytes(order="F")
    return bytes(hdr) + payload


def random_volume(rng: np.random.Generator) -> Volume:
    dims = tuple(int(d) for d in rng.integers(2, 12, size=3))
    if rng.integers(2) == 0:
        data = rng.integers(-1000, 1000, size=dims).astype(np.int16)
    else:
        data = rng.normal(0, 100, size=dims).astype(np.float32)
    while True:
        lin = rng.uniform(-2, 2, size=(3, 3))
        if abs(np.linalg.det(lin)) > 0.05:
            break
    affine = np.eye(4)
    affine[:3, :3] = lin
    # translations kept small: srow is stored as float32, and the round-trip
    # contract is 1e-6 absolute per entry
    affine[:3, 3] = rng.uniform(-8, 8, size=3)
    return Volume(data=data, affine=affine)


# --- reading ---------------------------------------------------------------

class TestRead:
    def test_identity_sform(self):
        data = np.arange(512, dtype=np.float32).reshape(8, 8, 8)
        stream = build_nifti_bytes(data, sform=np.eye(4), sform_code=1)
        vol, hdr = read_nifti(stream)
        assert vol.dims == (8, 8, 8)
        np.testing.assert_array_equal(vol.data, data)
        np.testing.assert_allclose(vol.affine, np.eye(4))
        assert hdr.sform_code == 1

    def test_pixdim_fallback(self):
        data = np.zeros((4, 4, 4), dtype=np.int16)
        stream = build_nifti_bytes(data, sform_code=0, qform_code=0, pixdim=(2.0, 2.0, 2.0))
        vol, _ = read_nifti(stream)
        np.testing.assert_allclose(vol.affine, np.diag([2.0, 2.0, 2.0, 1.0]))

    def test_qform_rotation(self):
        # 90 degree rotation about z: a = d = sqrt(1/2)
        d = np.sqrt(0.5)
        data = np.zeros((4, 4, 4), dtype=np.int16)
        stream = build_nifti_bytes(
            data, qform_code=1, quatern=(0.0, 0.0, d), qoffset=(10.0, 20.0, 30.0)
        )
        vol, _ = read_nifti(stream)
        expected = np.array(
            [[0, -1, 0, 10], [1, 0, 0, 20], [0, 0, 1, 30], [0, 0, 0, 1]], dtype=float
        )
        np.testing.assert_allclose(vol.affine, expected, atol=1e-6)

    def test_sform_beats_qform(self):
        data = np.zeros((4, 4, 4), dtype=np.int16)
        s = np.diag([3.0, 3.0, 3.0, 1.0])
        stream = build_nifti_bytes(
            data, sform=s, sform_code=2, qform_code=1, quatern=(0.0, 0.0, 0.7), pixdim=(9, 9, 9)
        )
        vol, _ = read_nifti(stream)
        np.testing.assert_allclose(vol.affine, s, atol=1e-6)

    def test_scl_slope_applied(self):
        # oracle: direct slope * v + inter evaluation
        data = np.full((2, 2, 2), 5, dtype=np.int16)
        stream = build_nifti_bytes(data, scl_slope=2.0, scl_inter=1.0)
        vol, hdr = read_nifti(stream)
        assert vol.data.dtype == np.float32
        np.testing.assert_array_equal(vol.data, 2.0 * 5 + 1.0)
        assert hdr.scl_slope == 2.0 and hdr.scl_inter == 1.0

    def test_slope_zero_means_unscaled(self):
        data = np.full((2, 2, 2), 7, dtype=np.int16)
        vol, _ = read_nifti(build_nifti_bytes(data, scl_slope=0.0, scl_inter=5.0))
        assert vol.data.dtype == np.int16
        np.testing.assert_array_equal(vol.data, 7)

    def test_big_endian(self):
        data = np.arange(27, dtype=np.int16).reshape(3, 3, 3)
        stream = build_nifti_bytes(data, order=">", sform=np.eye(4), sform_code=1)
        vol, _ = read_nifti(stream)
        assert vol.data.dtype.byteorder in ("=", "<", "|")
        np.testing.assert_array_equal(vol.data, data)

    def test_gzip_stream(self):
        data = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
        stream = gzip.compress(build_nifti_bytes(data, sform=np.eye(4), sform_code=1))
        vol, _ = read_nifti(stream)
        np.testing.assert_array_equal(vol.data, data)

    def test_fortran_order(self):
        # the first serialized element after (0,0,0) must be (1,0,0)
        data = np.zeros((2, 2, 2), dtype=np.int16)
        data[1, 0, 0] = 42
        stream = build_nifti_bytes(data)
        vals = np.frombuffer(stream[352:], dtype="<i2")
        assert vals[1] == 42

    def test_nonfinite_replaced_with_min(self):
        data = np.array([1.0, 2.0, np.nan, np.inf, 3.0, 4.0, 5.0, 6.0], dtype=np.float32)
        stream = build_nifti_bytes(data.reshape(2, 2, 2))
        vol, _ = read_nifti(stream)
        assert vol.nonfinite_replaced == 2
        assert np.isfinite(vol.data).all()
        assert vol.data.flatten(order="F")[2] == 1.0


class TestReadErrors:
    def test_bad_magic(self):
        data = np.zeros((2, 2, 2), dtype=np.int16)
        with pytest.raises(BadMagic):
            read_nifti(build_nifti_bytes(data, magic=b"XXXX"))

    def test_pair_format_rejected(self):
        data = np.zeros((2, 2, 2), dtype=np.int16)
        with pytest.raises(UnsupportedDatatype):
            read_nifti(build_nifti_bytes(data, magic=b"ni1\x00"))

    def test_bad_header_size(self):
        stream = bytearray(build_nifti_bytes(np.zeros((2, 2, 2), dtype=np.int16)))
        struct.pack_into("<i", stream, 0, 123)
        with pytest.raises(BadMagic):
            read_nifti(bytes(stream))

    def test_nifti2_rejected(self):
        stream = bytearray(build_nifti_bytes(np.zeros((2, 2, 2), dtype=np.int16)))
        struct.pack_into("<i", stream, 0, 540)
        with pytest.raises(UnsupportedDatatype):
            read_nifti(bytes(stream))

    def test_unsupported_datatype(self):
        data = np.zeros((2, 2, 2), dtype=np.int16)
        with pytest.raises(UnsupportedDatatype):
            read_nifti(build_nifti_bytes(data, datatype=8))  # int32

    def test_truncated_payload(self):
        stream = build_nifti_bytes(np.zeros((4, 4, 4), dtype=np.int16))
        with pytest.raises(TruncatedData):
            read_nifti(stream[:-10])

    def test_truncated_header(self):
        with pytest.raises(TruncatedData):
            read_nifti(b"\x00" * 100)

    def test_4d_rejected(self):
        stream = bytearray(build_nifti_bytes(np.zeros((2, 2, 2), dtype=np.int16)))
        struct.pack_into("<8h", stream, 40, 4, 2, 2, 2, 3, 1, 1, 1)
        with pytest.raises(UnsupportedDatatype):
            read_nifti(bytes(stream))


# --- writing ---------------------------------------------------------------

class TestWrite:
    def test_header_dump_matches(self):
        # oracle: the independent offset-based parser sees the right fields
        rng = np.random.default_rng(7)
        vol = random_volume(rng)
        raw = write_nifti(vol, NiftiHeader.for_volume(vol))
        h = dump_header(raw)
        assert h["sizeof_hdr"] == 348
        assert h["magic"] == b"n+1\x00"
        assert tuple(h["dim"][1:4]) == vol.dims
        assert h["dim"][0] == 3
        assert h["sform_code"] >= 1
        assert h["scl_slope"] == 1.0 and h["scl_inter"] == 0.0
        np.testing.assert_allclose(h["srow"], vol.affine[:3, :], atol=1e-6)

    def test_dim_mismatch(self):
        vol = Volume(np.zeros((4, 4, 4), dtype=np.int16), np.eye(4))
        hdr = NiftiHeader.for_volume(vol)
        hdr.dims = (4, 4, 5)
        with pytest.raises(DimMismatch):
            write_nifti(vol, hdr)

    def test_zero_extent_rejected(self):
        with pytest.raises(DimMismatch):
            Volume(np.zeros((0, 4, 4), dtype=np.int16), np.eye(4))

    def test_gzip_output(self):
        vol = Volume(np.arange(8, dtype=np.float32).reshape(2, 2, 2), np.eye(4))
        raw = write_nifti(vol, NiftiHeader.for_volume(vol), gzip_output=True)
        assert raw[:2] == b"\x1f\x8b"
        back, _ = read_nifti(raw)
        np.testing.assert_array_equal(back.data, vol.data)


class TestRoundTrip:
    def test_100_random_volumes(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            vol = random_volume(rng)
            back, _ = read_nifti(write_nifti(vol, NiftiHeader.for_volume(vol)))
            assert back.data.dtype == vol.data.dtype
            np.testing.assert_array_equal(back.data, vol.data)
            assert np.abs(back.affine - vol.affine).max() < 1e-6

    def test_affine_precedence_branches(self):
        data = np.zeros((4, 4, 4), dtype=np.int16)
        d = np.sqrt(0.5)
        cases = [
            build_nifti_bytes(data, sform=np.diag([2, 3, 4, 1.0]), sform_code=1),
            build_nifti_bytes(data, qform_code=1, quatern=(0, 0, d), pixdim=(2, 2, 2)),
            build_nifti_bytes(data, pixdim=(1.5, 2.5, 3.5)),
        ]
        expected = [
            np.diag([2.0, 3.0, 4.0, 1.0]),
            np.array([[0, -2, 0, 0], [2, 0, 0, 0], [0, 0, 2, 0], [0, 0, 0, 1.0]]),
            np.diag([1.5, 2.5, 3.5, 1.0]),
        ]
        for stream, want in zip(cases, expected):
            vol, _ = read_nifti(stream)
            np.testing.assert_allclose(vol.affine, want, atol=1e-6)
            back, _ = read_nifti(write_nifti(vol, NiftiHeader.for_volume(vol)))
            assert np.abs(back.affine - vol.affine).max() < 1e-6


class TestVolumeType:
    def test_intensity_range_cached(self):
        vol = Volume(np.array([[[1, 5]], [[3, -2]]], dtype=np.int16), np.eye(4))
        assert vol.intensity_range == (-2.0, 5.0)

    def test_content_hash_stable(self):
        a = Volume(np.arange(8, dtype=np.int16).reshape(2, 2, 2), np.eye(4))
        b = Volume(np.arange(8, dtype=np.int16).reshape(2, 2, 2), np.diag([2, 2, 2, 1.0]))
        assert a.content_hash == b.content_hash  # hash covers voxel payload, not affine
        c = Volume(np.arange(8, dtype=np.float32).reshape(2, 2, 2), np.eye(4))
        assert a.content_hash != c.content_hash

    def test_singular_affine_rejected(self):
        from voxelprompt.errors import SingularAffine

        bad = np.eye(4)
        bad[1, 1] = 0.0
        with pytest.raises(SingularAffine):
            Volume(np.zeros((2, 2, 2), dtype=np.int16), bad)
