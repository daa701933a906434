"""NIfTI-1 single-file reader/writer and the core volume type.

Only the NIfTI-1 single-file layout (.nii, optionally gzip-compressed) is
supported; NIfTI-2 and .hdr/.img pairs are rejected. Both little- and
big-endian headers are accepted, detected through the 348 header-size field.
Written files are always little-endian with the data payload at offset 352.
"""

from __future__ import annotations

import gzip
import hashlib
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, DimMismatch, SingularAffine, TruncatedData, UnsupportedDatatype

logger = logging.getLogger(__name__)

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"
GZIP_MAGIC = b"\x1f\x8b"

DT_INT16 = 4
DT_FLOAT32 = 16

_DTYPES = {DT_INT16: np.dtype(np.int16), DT_FLOAT32: np.dtype(np.float32)}
_DTYPE_CODES = {np.dtype(np.int16): DT_INT16, np.dtype(np.float32): DT_FLOAT32}
_BITPIX = {DT_INT16: 16, DT_FLOAT32: 32}

# NIfTI-1 header, 348 bytes, no implicit padding (explicit byte-order prefix).
_HEADER_FMT = (
    "i10s18sihcc"  # sizeof_hdr .. dim_info
    "8h"           # dim
    "3f4h"         # intent_p*, intent_code, datatype, bitpix, slice_start
    "8f"           # pixdim
    "3f"           # vox_offset, scl_slope, scl_inter
    "hcc"          # slice_end, slice_code, xyzt_units
    "4f"           # cal_max, cal_min, slice_duration, toffset
    "2i"           # glmax, glmin
    "80s24s"       # descrip, aux_file
    "2h"           # qform_code, sform_code
    "3f3f"         # quatern_b/c/d, qoffset_x/y/z
    "12f"          # srow_x, srow_y, srow_z
    "16s4s"        # intent_name, magic
)


@dataclass
class Volume:
    """A 3D scalar grid plus the affine mapping voxel indices to RAS mm.

    Data is indexed ``data[i, j, k]`` with i the fastest-varying (x) axis in
    the serialized layout. Element type is int16 or float32. The intensity
    range is cached at construction.
    """

    data: np.ndarray
    affine: np.ndarray
    nonfinite_replaced: int = 0
    intensity_range: tuple[float, float] = field(init=False)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DimMismatch(f"expected 3-D data, got {self.data.ndim}-D")
        if any(d < 1 for d in self.data.shape):
            raise DimMismatch(f"non-positive volume extent {self.data.shape}")
        if self.data.dtype not in _DTYPE_CODES:
            raise UnsupportedDatatype(f"unsupported element type {self.data.dtype}")
        self.affine = np.asarray(self.affine, dtype=np.float64)
        if self.affine.shape != (4, 4) or not np.isfinite(self.affine).all():
            raise SingularAffine("affine must be a finite 4x4 matrix")
        if np.linalg.det(self.affine[:3, :3]) == 0.0:
            raise SingularAffine("affine upper-left 3x3 is singular")
        if not np.isfinite(self.data).all():
            raise ValueError("volume data contains non-finite values")
        self.intensity_range = (float(self.data.min()), float(self.data.max()))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def content_hash(self) -> str:
        """sha256 over dims, element type and the x-fastest byte payload."""
        h = hashlib.sha256()
        h.update(struct.pack("<3hH", *self.dims, _DTYPE_CODES[self.data.dtype]))
        h.update(np.ascontiguousarray(self.data.T).tobytes())
        return h.hexdigest()


@dataclass
class NiftiHeader:
    """Parsed subset of the NIfTI-1 header needed for geometry and scaling."""

    dims: tuple[int, int, int]
    datatype: int
    pixdim: tuple[float, float, float]
    qfac: float = 1.0
    sform_code: int = 0
    qform_code: int = 0
    srow: np.ndarray = field(default_factory=lambda: np.zeros((3, 4)))
    quatern: tuple[float, float, float] = (0.0, 0.0, 0.0)
    qoffset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scl_slope: float = 1.0
    scl_inter: float = 0.0
    descrip: str = ""

    @classmethod
    def for_volume(cls, volume: Volume, descrip: str = "") -> "NiftiHeader":
        """Header describing ``volume`` with its affine stored as sform."""
        spacing = tuple(float(np.linalg.norm(volume.affine[:3, i])) for i in range(3))
        return cls(
            dims=volume.dims,
            datatype=_DTYPE_CODES[volume.data.dtype],
            pixdim=spacing,
            sform_code=1,
            srow=volume.affine[:3, :].copy(),
            descrip=descrip,
        )

    def affine(self) -> np.ndarray:
        """Affine under the sform > qform > pixdim-diagonal precedence."""
        if self.sform_code > 0:
            out = np.eye(4)
            out[:3, :] = self.srow
            return out
        if self.qform_code > 0:
            return _quaternion_affine(self.quatern, self.qoffset, self.pixdim, self.qfac)
        return np.diag([self.pixdim[0], self.pixdim[1], self.pixdim[2], 1.0])


def _quaternion_affine(quatern, qoffset, pixdim, qfac) -> np.ndarray:
    b, c, d = quatern
    a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    scale = np.array([pixdim[0], pixdim[1], qfac * pixdim[2]])
    out = np.eye(4)
    out[:3, :3] = rot * scale[np.newaxis, :]
    out[:3, 3] = qoffset
    return out


assert struct.calcsize("<" + _HEADER_FMT) == HEADER_SIZE


def _unpack_header(raw: bytes, order: str) -> dict:
    vals = struct.unpack(order + _HEADER_FMT, raw[:HEADER_SIZE])
    names = {}
    names["sizeof_hdr"] = vals[0]
    names["dim"] = vals[7:15]
    names["datatype"] = vals[19]
    names["bitpix"] = vals[20]
    names["pixdim"] = vals[22:30]
    names["vox_offset"] = vals[30]
    names["scl_slope"] = vals[31]
    names["scl_inter"] = vals[32]
    names["descrip"] = vals[42]
    names["qform_code"] = vals[44]
    names["sform_code"] = vals[45]
    names["quatern"] = vals[46:49]
    names["qoffset"] = vals[49:52]
    names["srow"] = vals[52:64]
    names["magic"] = vals[65]
    return names


def read_nifti(data: bytes) -> tuple[Volume, NiftiHeader]:
    """Parse a NIfTI-1 single-file byte stream (gzipped or raw).

    The affine is taken from the sform when its code is positive, else
    composed from the qform quaternion, else the pixdim diagonal. Voxel
    values have scl_slope/scl_inter applied when the slope is nonzero.
    Non-finite voxels are replaced by the finite minimum and counted.
    """
    if data[:2] == GZIP_MAGIC:
        data = gzip.decompress(data)
    if len(data) < HEADER_SIZE:
        raise TruncatedData(f"stream of {len(data)} bytes is shorter than a header")

    (size_le,) = struct.unpack("<i", data[:4])
    (size_be,) = struct.unpack(">i", data[:4])
    if size_le == HEADER_SIZE:
        order = "<"
    elif size_be == HEADER_SIZE:
        order = ">"
    elif 540 in (size_le, size_be):
        raise UnsupportedDatatype("NIfTI-2 streams are not supported")
    else:
        raise BadMagic("header-size field is not 348")

    h = _unpack_header(data, order)
    if h["magic"] == MAGIC_PAIR:
        raise UnsupportedDatatype(".hdr/.img pair format is not supported")
    if h["magic"] != MAGIC_SINGLE:
        raise BadMagic(f"bad magic bytes {h['magic']!r}")

    ndim = h["dim"][0]
    if ndim < 1 or ndim > 7:
        raise BadMagic(f"invalid dim[0] = {ndim}")
    full = [max(1, int(d)) for d in h["dim"][1:8]]
    if ndim > 3 and any(d > 1 for d in full[3:ndim]):
        raise UnsupportedDatatype("volumes with more than 3 dimensions are not supported")
    dims = (full[0], full[1], full[2])

    if h["datatype"] not in _DTYPES:
        raise UnsupportedDatatype(f"datatype code {h['datatype']}")
    dtype = _DTYPES[h["datatype"]].newbyteorder(order)

    offset = int(h["vox_offset"])
    if offset < HEADER_SIZE:
        offset = HEADER_SIZE + 4
    nbytes = int(np.prod(dims)) * dtype.itemsize
    if len(data) < offset + nbytes:
        raise TruncatedData(f"need {offset + nbytes} bytes, stream has {len(data)}")

    raw = np.frombuffer(data, dtype=dtype, count=int(np.prod(dims)), offset=offset)
    arr = raw.reshape(dims, order="F").astype(dtype.newbyteorder("="))

    slope, inter = float(h["scl_slope"]), float(h["scl_inter"])
    if slope != 0.0 and (slope != 1.0 or inter != 0.0):
        arr = (arr.astype(np.float32) * np.float32(slope)) + np.float32(inter)

    replaced = 0
    if arr.dtype == np.float32:
        bad = ~np.isfinite(arr)
        replaced = int(bad.sum())
        if replaced:
            finite = arr[~bad]
            fill = np.float32(finite.min()) if finite.size else np.float32(0)
            arr = arr.copy()
            arr[bad] = fill
            logger.warning("replaced %d non-finite voxels with %s", replaced, fill)

    pixdim = h["pixdim"]
    header = NiftiHeader(
        dims=dims,
        datatype=int(h["datatype"]),
        pixdim=(float(pixdim[1]), float(pixdim[2]), float(pixdim[3])),
        qfac=-1.0 if pixdim[0] < 0 else 1.0,
        sform_code=int(h["sform_code"]),
        qform_code=int(h["qform_code"]),
        srow=np.array(h["srow"], dtype=np.float64).reshape(3, 4),
        quatern=tuple(float(v) for v in h["quatern"]),
        qoffset=tuple(float(v) for v in h["qoffset"]),
        scl_slope=slope,
        scl_inter=inter,
        descrip=h["descrip"].split(b"\x00", 1)[0].decode("ascii", "replace"),
    )
    volume = Volume(data=arr, affine=header.affine(), nonfinite_replaced=replaced)
    return volume, header


def write_nifti(volume: Volume, header: NiftiHeader, gzip_output: bool = False) -> bytes:
    """Serialize a volume as a little-endian NIfTI-1 single-file stream.

    The volume's affine is written as the sform (authoritative on re-read)
    and scl_slope/scl_inter are reset to 1/0 because the payload holds
    materialized values. Reading the result back reproduces the voxel data
    bit-exactly and the affine to float32 precision.
    """
    if tuple(header.dims) != volume.dims:
        raise DimMismatch(f"header dims {header.dims} != volume dims {volume.dims}")
    if any(d < 1 for d in header.dims):
        raise DimMismatch(f"non-positive header extent {header.dims}")

    datatype = _DTYPE_CODES[volume.data.dtype]
    dim = [3, *volume.dims, 1, 1, 1, 1]
    pixdim = [header.qfac, *header.pixdim, 0.0, 0.0, 0.0, 0.0]
    srow = volume.affine[:3, :].astype(np.float32).flatten()

    raw = struct.pack(
        "<" + _HEADER_FMT,
        HEADER_SIZE,
        b"", b"", 0, 0, b"\x00", b"\x00",
        *dim,
        0.0, 0.0, 0.0, 0,
        datatype, _BITPIX[datatype], 0,
        *pixdim,
        float(HEADER_SIZE + 4),  # vox_offset
        1.0, 0.0,                # scl_slope, scl_inter
        0, b"\x00", b"\x00",
        0.0, 0.0, 0.0, 0.0,
        0, 0,
        header.descrip.encode("ascii", "replace")[:79], b"",
        header.qform_code, max(1, header.sform_code),
        *header.quatern, *header.qoffset,
        *srow,
        b"", MAGIC_SINGLE,
    )
    payload = np.asfortranarray(volume.data.astype(volume.data.dtype.newbyteorder("<"))).tobytes(order="F")
    out = raw + b"\x00\x00\x00\x00" + payload
    if gzip_output:
        out = gzip.compress(out, mtime=0)
    return out
