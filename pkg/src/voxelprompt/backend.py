"""Promptable-segmentation backend contract and the analytic reference model.

A backend exposes encode (volume -> embedding, expensive, cached by content
hash) and decode (embedding + point prompts + previous logits -> logits,
cheap). The reference model is closed-form so every pipeline property is
exactly testable without learned weights, while real models remain reachable
through the external adapter.

Reference decode semantics, evaluated in float64 at every voxel x:

    logit(x) = max_p s(x, p) - max_q s(x, q) + gamma * tanh(prev(x))

over include points p and exclude points q, with

    s(x, p) = w_dist * exp(-|x - p|^2 / (2 * sigma_dist^2))
            + w_int  * exp(-(I(x) - I(p))^2 / (2 * sigma_int^2))

where sigma_int is a configured fraction of the intensity range of the
model-space volume. A missing exclude set or previous-logit volume
contributes 0. The reference encoder computes a multi-scale feature grid;
channels 0 and 1 are the per-block intensity mean and standard deviation.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimMismatch, EmptyIncludeSet, OutOfBounds, UnknownBackend
from .geometry import VoxelIndex
from .nifti import Volume


@dataclass(frozen=True)
class DecodeParams:
    """Tunable constants of the reference decoder."""

    weight_distance: float = 4.0
    weight_intensity: float = 4.0
    sigma_distance: float = 12.0          # voxels
    sigma_intensity_frac: float = 0.1     # fraction of volume intensity range
    prev_gain: float = 1.0
    background_logit: float = -10.0


@dataclass(frozen=True)
class BackendDescriptor:
    """Identity and geometry of a selectable model."""

    name: str
    input_dims: tuple[int, int, int]
    stride: int
    dimensionality: str = "3d"  # "3d": volumetric decode, "2d": one slice per window

    def __post_init__(self):
        if any(d < 1 for d in self.input_dims):
            raise DimMismatch(f"non-positive input dims {self.input_dims}")
        if self.stride < 1:
            raise DimMismatch(f"non-positive stride {self.stride}")
        for d in self.input_dims:
            if d % self.stride != 0 and d >= self.stride:
                raise DimMismatch(
                    f"input extent {d} neither divisible by nor smaller than stride {self.stride}"
                )
        if self.dimensionality not in ("3d", "2d"):
            raise ValueError(f"unknown dimensionality tag {self.dimensionality!r}")

    @property
    def grid_dims(self) -> tuple[int, int, int]:
        return tuple(-(-d // self.stride) for d in self.input_dims)


@dataclass
class ImageEmbedding:
    grid_dims: tuple[int, int, int]
    channels: int
    values: np.ndarray  # shape grid_dims + (channels,)
    provenance: str     # "<backend name>:<volume content hash>"


@dataclass(frozen=True)
class PromptSet:
    """Ordered include/exclude points in model (window) space."""

    include: tuple[VoxelIndex, ...]
    exclude: tuple[VoxelIndex, ...] = ()


def binarize(logits: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    """Strict threshold: mask voxel is 1 iff logit > threshold."""
    return (np.asarray(logits) > threshold).astype(np.uint8)


def _block_mean(arr: np.ndarray, stride: int) -> np.ndarray:
    """Mean over disjoint stride^3 blocks; trailing partial blocks allowed."""
    out = arr
    lengths = []
    for axis in range(3):
        starts = np.arange(0, arr.shape[axis], stride)
        out = np.add.reduceat(out, starts, axis=axis)
        lengths.append(np.minimum(stride, arr.shape[axis] - starts).astype(np.float64))
    counts = lengths[0][:, None, None] * lengths[1][None, :, None] * lengths[2][None, None, :]
    return out / counts


def _block_lengths(n: int, stride: int) -> np.ndarray:
    starts = np.arange(0, n, stride)
    return np.minimum(stride, n - starts)


def block_statistics(arr: np.ndarray, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-block mean and population standard deviation (two-pass, float64)."""
    f = np.asarray(arr, dtype=np.float64)
    mean = _block_mean(f, stride)
    expanded = mean
    for axis in range(3):
        expanded = np.repeat(expanded, _block_lengths(f.shape[axis], stride), axis=axis)
    var = _block_mean((f - expanded) ** 2, stride)
    return mean, np.sqrt(var)


class PromptableBackend:
    """Shared caching, counting and validation for concrete backends.

    Instances are immutable after construction apart from the embedding
    cache and instrumentation counters, both guarded by a lock.
    """

    _CACHE_CAPACITY = 64

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        self._cache: OrderedDict[str, ImageEmbedding] = OrderedDict()
        self._lock = threading.Lock()
        self.encode_calls = 0  # actual embedding computations (cache misses)
        self.decode_calls = 0

    # -- contract ----------------------------------------------------------

    def encode(self, volume: Volume) -> ImageEmbedding:
        if volume.dims != self.descriptor.input_dims:
            raise DimMismatch(
                f"volume dims {volume.dims} != backend input {self.descriptor.input_dims}"
            )
        key = volume.content_hash
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        embedding = self._compute_embedding(volume)
        embedding.provenance = f"{self.descriptor.name}:{key}"
        with self._lock:
            self.encode_calls += 1
            self._cache[key] = embedding
            while len(self._cache) > self._CACHE_CAPACITY:
                self._cache.popitem(last=False)
        return embedding

    def decode(
        self,
        embedding: ImageEmbedding,
        prompts: PromptSet,
        prev: np.ndarray | None,
        volume: Volume,
    ) -> np.ndarray:
        dims = self.descriptor.input_dims
        if volume.dims != dims:
            raise DimMismatch(f"intensity volume dims {volume.dims} != input {dims}")
        if tuple(embedding.grid_dims) != self.descriptor.grid_dims:
            raise DimMismatch(
                f"embedding grid {embedding.grid_dims} != expected {self.descriptor.grid_dims}"
            )
        if prev is not None and tuple(prev.shape) != dims:
            raise DimMismatch(f"prev logits shape {prev.shape} != input {dims}")
        if not prompts.include:
            raise EmptyIncludeSet("decode requires at least one include point")
        for p in list(prompts.include) + list(prompts.exclude):
            if any(v < 0 or v >= d for v, d in zip(p, dims)):
                raise OutOfBounds(f"prompt {tuple(p)} outside model space {dims}")
        with self._lock:
            self.decode_calls += 1
        return self._compute_logits(embedding, prompts, prev, volume)

    # -- instrumentation ----------------------------------------------------

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def reset_counters(self) -> None:
        with self._lock:
            self.encode_calls = 0
            self.decode_calls = 0

    # -- to implement --------------------------------------------------------

    def _compute_embedding(self, volume: Volume) -> ImageEmbedding:
        raise NotImplementedError

    def _compute_logits(self, embedding, prompts, prev, volume) -> np.ndarray:
        raise NotImplementedError


class ReferenceBackend(PromptableBackend):
    """Deterministic closed-form backend.

    The encoder builds a 5-channel block-feature grid: raw intensity mean
    and standard deviation (channels 0 and 1), means of two Gaussian-smoothed
    scales, and mean gradient magnitude. Smoothed scales and gradients give
    the encoder the weight of a real context-aggregating model, which is what
    keeps encode strictly more expensive than decode.
    """

    CHANNELS = 5
    SMOOTH_SIGMAS = (2.0, 4.0)

    def __init__(self, descriptor: BackendDescriptor, params: DecodeParams = DecodeParams()):
        super().__init__(descriptor)
        self.params = params

    def _compute_embedding(self, volume: Volume) -> ImageEmbedding:
        stride = self.descriptor.stride
        f = volume.data.astype(np.float64)
        mean, std = block_statistics(f, stride)
        feats = [mean, std]
        for sigma in self.SMOOTH_SIGMAS:
            smoothed = ndimage.gaussian_filter(f, sigma, mode="nearest")
            feats.append(_block_mean(smoothed, stride))
        grad_axes = [a for a in range(3) if f.shape[a] >= 2]
        if grad_axes:
            grads = np.gradient(f, axis=grad_axes)
            if len(grad_axes) == 1:
                grads = [grads]
        else:
            grads = [np.zeros_like(f)]
        magnitude = np.sqrt(np.sum([g * g for g in grads], axis=0))
        feats.append(_block_mean(magnitude, stride))
        values = np.stack(feats, axis=-1)
        return ImageEmbedding(
            grid_dims=self.descriptor.grid_dims,
            channels=self.CHANNELS,
            values=values,
            provenance="",
        )

    def _similarity(self, point: VoxelIndex, f: np.ndarray, sigma_int: float) -> np.ndarray:
        p = self.params
        two_sd2 = 2.0 * p.sigma_distance**2
        axes = [
            np.exp(-((np.arange(n, dtype=np.float64) - point[a]) ** 2) / two_sd2)
            for a, n in enumerate(f.shape)
        ]
        dist = axes[0][:, None, None] * axes[1][None, :, None] * axes[2][None, None, :]
        diff = f - f[point[0], point[1], point[2]]
        intensity = np.exp(-(diff**2) / (2.0 * sigma_int**2))
        return p.weight_distance * dist + p.weight_intensity * intensity

    def _compute_logits(self, embedding, prompts, prev, volume) -> np.ndarray:
        p = self.params
        f = volume.data.astype(np.float64)
        lo, hi = volume.intensity_range
        sigma_int = p.sigma_intensity_frac * (hi - lo)
        if sigma_int == 0.0:
            sigma_int = 1.0  # constant volume: intensity term becomes exp(0) anyway

        include = [self._similarity(pt, f, sigma_int) for pt in prompts.include]
        logits = np.maximum.reduce(include)
        if prompts.exclude:
            exclude = [self._similarity(pt, f, sigma_int) for pt in prompts.exclude]
            logits = logits - np.maximum.reduce(exclude)
        if prev is not None:
            logits = logits + p.prev_gain * np.tanh(np.asarray(prev, dtype=np.float64))
        return logits

    def prompt_logit(
        self,
        x: VoxelIndex,
        prompts: PromptSet,
        prev_value: float | None,
        volume: Volume,
    ) -> float:
        """Scalar evaluation of the decode formula at a single voxel."""
        p = self.params
        f = volume.data.astype(np.float64)
        lo, hi = volume.intensity_range
        sigma_int = p.sigma_intensity_frac * (hi - lo) or 1.0

        def s(point):
            d2 = sum((x[a] - point[a]) ** 2 for a in range(3))
            di = float(f[x] - f[point[0], point[1], point[2]])
            return p.weight_distance * math.exp(-d2 / (2 * p.sigma_distance**2)) + (
                p.weight_intensity * math.exp(-(di**2) / (2 * sigma_int**2))
            )

        value = max(s(pt) for pt in prompts.include)
        if prompts.exclude:
            value -= max(s(pt) for pt in prompts.exclude)
        if prev_value is not None:
            value += p.prev_gain * math.tanh(prev_value)
        return value


class BackendRegistry:
    """Named set of selectable backends."""

    def __init__(self):
        self._backends: dict[str, PromptableBackend] = {}

    def register(self, backend: PromptableBackend) -> None:
        self._backends[backend.descriptor.name] = backend

    def get(self, name: str) -> PromptableBackend:
        try:
            return self._backends[name]
        except KeyError:
            raise UnknownBackend(f"no backend named {name!r}") from None

    def descriptors(self) -> list[BackendDescriptor]:
        return [b.descriptor for b in self._backends.values()]

    def __contains__(self, name: str) -> bool:
        return name in self._backends


def default_registry(params: DecodeParams = DecodeParams()) -> BackendRegistry:
    """Registry with the stock reference models (volumetric and slice-wise)."""
    registry = BackendRegistry()
    registry.register(ReferenceBackend(BackendDescriptor("ref3d", (128, 128, 128), 4, "3d"), params))
    registry.register(ReferenceBackend(BackendDescriptor("ref3d-small", (64, 64, 64), 4, "3d"), params))
    registry.register(ReferenceBackend(BackendDescriptor("ref2d", (128, 128, 1), 4, "2d"), params))
    return registry
