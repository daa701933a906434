"""RAS/voxel coordinate conversion and crop/pad with inverse bookkeeping.

All functions are pure. Model input size is reached strictly by cropping and
padding, never by resampling, so intensities are preserved exactly and the
fit/restore pair is invertible on the overlap region.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimMismatch, OutOfBounds, PromptsUnfittable, SingularAffine
from .nifti import Volume


class RasPoint(NamedTuple):
    """Physical-space point, RAS convention, millimeters."""

    x: float
    y: float
    z: float


class VoxelIndex(NamedTuple):
    i: int
    j: int
    k: int


@dataclass(frozen=True)
class RegionMap:
    """Bookkeeping for a crop/pad window.

    ``offset`` is the source-volume index of the window's (0,0,0) corner;
    negative components mean the window starts in padding. ``dims`` is the
    window (model input) size.
    """

    offset: tuple[int, int, int]
    dims: tuple[int, int, int]
    pad_value: float

    def is_identity_for(self, source_dims: Sequence[int]) -> bool:
        return self.offset == (0, 0, 0) and self.dims == tuple(source_dims)


def _round_half_away(values: np.ndarray) -> np.ndarray:
    # round-half-away-from-zero, stated explicitly so ports agree
    return np.copysign(np.floor(np.abs(values) + 0.5), values)


def ras_to_voxel(point: RasPoint, affine: np.ndarray, dims: Sequence[int] | None = None) -> VoxelIndex:
    """Map an RAS point to the nearest voxel index via the inverse affine.

    When ``dims`` is given, indices outside ``[0, dims)`` raise OutOfBounds.
    """
    affine = np.asarray(affine, dtype=np.float64)
    if np.linalg.det(affine[:3, :3]) == 0.0:
        raise SingularAffine("cannot invert affine with singular 3x3 part")
    hom = np.array([point[0], point[1], point[2], 1.0])
    voxel = np.linalg.solve(affine, hom)[:3]
    idx = _round_half_away(voxel).astype(int)
    if dims is not None:
        if any(v < 0 or v >= d for v, d in zip(idx, dims)):
            raise OutOfBounds(f"voxel {tuple(idx)} outside dims {tuple(dims)}")
    return VoxelIndex(int(idx[0]), int(idx[1]), int(idx[2]))


def voxel_to_ras(voxel: VoxelIndex, affine: np.ndarray) -> RasPoint:
    affine = np.asarray(affine, dtype=np.float64)
    hom = affine @ np.array([voxel[0], voxel[1], voxel[2], 1.0])
    return RasPoint(float(hom[0]), float(hom[1]), float(hom[2]))


def _clamp(value: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, value))


def fit_to_model(
    volume: Volume,
    prompts: Sequence[VoxelIndex],
    target_dims: Sequence[int],
    pad_value: float | None = None,
) -> tuple[Volume, RegionMap]:
    """Crop/pad ``volume`` to ``target_dims`` around the prompts.

    The window is centered on the integer centroid of the prompts, shifted
    when necessary to contain every prompt, then clamped to maximally
    overlap the source. Out-of-source voxels take ``pad_value`` (defaults
    to the source minimum, mimicking background).

    Raises PromptsUnfittable when the prompt bounding box exceeds the
    target extent on any axis.
    """
    target = tuple(int(t) for t in target_dims)
    if any(t < 1 for t in target):
        raise DimMismatch(f"non-positive target dims {target}")
    if not prompts:
        raise ValueError("fit_to_model requires at least one prompt")
    dims = volume.dims
    for p in prompts:
        if any(v < 0 or v >= d for v, d in zip(p, dims)):
            raise OutOfBounds(f"prompt {tuple(p)} outside volume dims {dims}")

    pts = np.asarray(prompts, dtype=np.int64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    for axis in range(3):
        if hi[axis] - lo[axis] + 1 > target[axis]:
            raise PromptsUnfittable(
                f"prompt span {int(hi[axis] - lo[axis] + 1)} exceeds target "
                f"{target[axis]} on axis {axis}"
            )

    centroid = _round_half_away(pts.mean(axis=0)).astype(int)
    offset = []
    for axis in range(3):
        start = int(centroid[axis]) - target[axis] // 2
        # keep every prompt inside the window
        start = _clamp(start, int(hi[axis]) - target[axis] + 1, int(lo[axis]))
        # then maximize overlap with the source extent
        span = dims[axis] - target[axis]
        start = _clamp(start, min(0, span), max(0, span))
        offset.append(start)

    if pad_value is None:
        pad_value = volume.intensity_range[0]
    pad_cast = np.asarray(pad_value, dtype=volume.data.dtype)

    out = np.full(target, pad_cast, dtype=volume.data.dtype)
    src_lo = [max(0, offset[a]) for a in range(3)]
    src_hi = [min(dims[a], offset[a] + target[a]) for a in range(3)]
    dst_lo = [src_lo[a] - offset[a] for a in range(3)]
    dst_hi = [dst_lo[a] + (src_hi[a] - src_lo[a]) for a in range(3)]
    out[dst_lo[0]:dst_hi[0], dst_lo[1]:dst_hi[1], dst_lo[2]:dst_hi[2]] = volume.data[
        src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]
    ]

    shift = np.eye(4)
    shift[:3, 3] = offset
    fitted = Volume(data=out, affine=volume.affine @ shift)
    region = RegionMap(offset=tuple(offset), dims=target, pad_value=float(pad_value))
    return fitted, region


def map_prompt(voxel: VoxelIndex, region: RegionMap) -> VoxelIndex:
    """Source-space voxel index to window (model) space."""
    return VoxelIndex(
        voxel[0] - region.offset[0], voxel[1] - region.offset[1], voxel[2] - region.offset[2]
    )


def unmap_prompt(voxel: VoxelIndex, region: RegionMap) -> VoxelIndex:
    """Window-space voxel index back to source space."""
    return VoxelIndex(
        voxel[0] + region.offset[0], voxel[1] + region.offset[1], voxel[2] + region.offset[2]
    )


def place_window(values: np.ndarray, region: RegionMap, out: np.ndarray) -> np.ndarray:
    """Copy window-space ``values`` into ``out`` at the region's position.

    Voxels of the window that fall outside ``out`` (padding) are dropped;
    voxels of ``out`` not covered by the window are left untouched.
    """
    if tuple(values.shape) != region.dims:
        raise DimMismatch(f"values shape {values.shape} != window dims {region.dims}")
    dims = out.shape
    src_lo = [max(0, region.offset[a]) for a in range(3)]
    src_hi = [min(dims[a], region.offset[a] + region.dims[a]) for a in range(3)]
    win_lo = [src_lo[a] - region.offset[a] for a in range(3)]
    win_hi = [win_lo[a] + (src_hi[a] - src_lo[a]) for a in range(3)]
    out[src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]] = values[
        win_lo[0]:win_hi[0], win_lo[1]:win_hi[1], win_lo[2]:win_hi[2]
    ]
    return out


def restore_mask(
    logits: np.ndarray,
    region: RegionMap,
    original_dims: Sequence[int],
    background_logit: float = -10.0,
) -> np.ndarray:
    """Place window-space logits back at source coordinates.

    Pure placement, no interpolation; source voxels outside the window get
    ``background_logit``.
    """
    out = np.full(tuple(original_dims), background_logit, dtype=np.float64)
    return place_window(np.asarray(logits, dtype=np.float64), region, out)


def extract_window(
    source: np.ndarray, region: RegionMap, fill: float = 0.0
) -> np.ndarray:
    """Forward crop of an arbitrary source-shaped array into window space."""
    out = np.full(region.dims, fill, dtype=np.float64)
    dims = source.shape
    src_lo = [max(0, region.offset[a]) for a in range(3)]
    src_hi = [min(dims[a], region.offset[a] + region.dims[a]) for a in range(3)]
    win_lo = [src_lo[a] - region.offset[a] for a in range(3)]
    win_hi = [win_lo[a] + (src_hi[a] - src_lo[a]) for a in range(3)]
    out[win_lo[0]:win_hi[0], win_lo[1]:win_hi[1], win_lo[2]:win_hi[2]] = source[
        src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]
    ]
    return out
