"""Seeded synthetic volumes: bright spheres on a noisy background.

Stand-in for real scans in benchmarks and tests; CT-like int16 intensities.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .nifti import Volume


def make_phantom(
    dims: Sequence[int] = (128, 128, 128),
    seed: int = 0,
    spheres: int = 1,
    sphere_intensity: float = 900.0,
    noise_sigma: float = 40.0,
    background: float = 0.0,
    spacing: Sequence[float] = (1.0, 1.0, 1.0),
) -> Volume:
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    data = rng.normal(background, noise_sigma, size=dims)

    grids = np.indices(dims, dtype=np.float64)
    radius = max(2.0, min(dims) / 6.0)
    for _ in range(spheres):
        center = [rng.uniform(0.3 * d, 0.7 * d) for d in dims]
        dist2 = sum((grids[a] - center[a]) ** 2 for a in range(3))
        data[dist2 <= radius**2] = sphere_intensity + rng.normal(0, noise_sigma / 4)

    affine = np.diag([spacing[0], spacing[1], spacing[2], 1.0])
    return Volume(data=np.clip(data, -32768, 32767).astype(np.int16), affine=affine)


def sphere_center_voxel(volume: Volume) -> tuple[int, int, int]:
    """Voxel index of the brightest region's center of mass."""
    data = volume.data.astype(np.float64)
    threshold = data.min() + 0.75 * (data.max() - data.min())
    mask = data >= threshold
    idx = np.argwhere(mask)
    center = idx.mean(axis=0)
    return tuple(int(round(c)) for c in center)
