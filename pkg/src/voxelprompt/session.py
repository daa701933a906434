"""Interactive segmentation session.

A session mirrors the three host-platform node types: the volume node (raw
image + header), two markup nodes (ordered include/exclude point lists) and
the segmentation node (committed masks). Every prompt change re-runs the
fit -> encode -> map -> decode -> restore pipeline over all current prompts,
feeding the previous working logits back into the decoder.

Operations on one session are serialized by its lock; distinct sessions are
fully independent. Any operation that raises leaves the session untouched.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np

from .backend import BackendRegistry, ImageEmbedding, PromptableBackend, PromptSet, binarize
from .errors import IndexOutOfRange, NoWorkingMask, OutOfBounds
from .geometry import (
    RasPoint,
    RegionMap,
    VoxelIndex,
    extract_window,
    fit_to_model,
    map_prompt,
    place_window,
    ras_to_voxel,
)
from .nifti import NiftiHeader, Volume, read_nifti


@dataclass(frozen=True)
class PromptRecord:
    ras: RasPoint
    voxel: VoxelIndex


@dataclass(frozen=True)
class CommittedMask:
    mask_id: str
    label: str
    mask: np.ndarray  # uint8, volume dims
    threshold: float


@dataclass(frozen=True)
class ActiveWindow:
    """A fitted crop window with its cached embedding and intensity lookup."""

    region: RegionMap
    embedding: ImageEmbedding
    window_volume: Volume


@dataclass(frozen=True)
class MutationSummary:
    revision: int
    foreground_voxels: int
    changed_bbox: tuple[tuple[int, int, int], tuple[int, int, int]] | None
    include_count: int
    exclude_count: int
    voxel: VoxelIndex | None = None


class Session:
    def __init__(
        self,
        volume: Volume,
        header: NiftiHeader,
        backend: PromptableBackend,
        default_threshold: float = 0.0,
    ):
        self.id = uuid.uuid4().hex
        self.volume = volume
        self.header = header
        self.backend = backend
        self.default_threshold = default_threshold
        self.include: list[PromptRecord] = []
        self.exclude: list[PromptRecord] = []
        self.working_logits: np.ndarray | None = None
        self.committed: list[CommittedMask] = []
        self.active_windows: list[ActiveWindow] = []
        self.ensemble_logits: np.ndarray | None = None
        self.uncertainty: np.ndarray | None = None
        self.revision = 0
        self.lock = threading.RLock()

    # -- pipeline ------------------------------------------------------------

    def _background(self) -> float:
        params = getattr(self.backend, "params", None)
        return params.background_logit if params is not None else -10.0

    def _run_window(
        self,
        include_vox: list[VoxelIndex],
        exclude_vox: list[VoxelIndex],
        prev_source: np.ndarray | None,
    ) -> tuple[np.ndarray, ActiveWindow]:
        """One fit/encode/decode pass over the given prompts."""
        fitted, region = fit_to_model(
            self.volume, include_vox + exclude_vox, self.backend.descriptor.input_dims
        )
        embedding = self.backend.encode(fitted)
        prompts = PromptSet(
            include=tuple(map_prompt(v, region) for v in include_vox),
            exclude=tuple(map_prompt(v, region) for v in exclude_vox),
        )
        prev_model = (
            extract_window(prev_source, region, fill=0.0) if prev_source is not None else None
        )
        logits = self.backend.decode(embedding, prompts, prev_model, fitted)
        return logits, ActiveWindow(region, embedding, fitted)

    def _recompute(
        self,
        include_vox: list[VoxelIndex],
        exclude_vox: list[VoxelIndex],
        prev_source: np.ndarray | None,
    ) -> tuple[np.ndarray | None, list[ActiveWindow]]:
        """Full pipeline over all prompts; returns new working logits."""
        if not include_vox:
            return None, []
        working = np.full(self.volume.dims, self._background(), dtype=np.float64)
        windows: list[ActiveWindow] = []
        if self.backend.descriptor.dimensionality == "2d":
            # slice-wise model: prompts act only on their own slice, one
            # window per prompted slice, background logit elsewhere
            for k in sorted({v.k for v in include_vox}):
                inc_k = [v for v in include_vox if v.k == k]
                exc_k = [v for v in exclude_vox if v.k == k]
                logits, window = self._run_window(inc_k, exc_k, prev_source)
                place_window(logits, window.region, working)
                windows.append(window)
        else:
            logits, window = self._run_window(include_vox, exclude_vox, prev_source)
            place_window(logits, window.region, working)
            windows.append(window)
        return working, windows

    def _summary(
        self, old_working: np.ndarray | None, voxel: VoxelIndex | None = None
    ) -> MutationSummary:
        tau = self.default_threshold
        new_mask = (
            binarize(self.working_logits, tau)
            if self.working_logits is not None
            else np.zeros(self.volume.dims, dtype=np.uint8)
        )
        old_mask = (
            binarize(old_working, tau)
            if old_working is not None
            else np.zeros(self.volume.dims, dtype=np.uint8)
        )
        changed = np.argwhere(new_mask != old_mask)
        bbox = None
        if changed.size:
            bbox = (
                tuple(int(v) for v in changed.min(axis=0)),
                tuple(int(v) for v in changed.max(axis=0)),
            )
        return MutationSummary(
            revision=self.revision,
            foreground_voxels=int(new_mask.sum()),
            changed_bbox=bbox,
            include_count=len(self.include),
            exclude_count=len(self.exclude),
            voxel=voxel,
        )

    def _invalidate_ensemble(self) -> None:
        self.ensemble_logits = None
        self.uncertainty = None

    # -- operations ------------------------------------------------------------

    def add_prompt(self, point: RasPoint, kind: str) -> MutationSummary:
        """Append a prompt and re-run the pipeline over all prompts."""
        if kind not in ("include", "exclude"):
            raise ValueError(f"prompt kind must be include or exclude, got {kind!r}")
        with self.lock:
            voxel = ras_to_voxel(point, self.volume.affine, self.volume.dims)
            record = PromptRecord(ras=point, voxel=voxel)
            include_vox = [p.voxel for p in self.include]
            exclude_vox = [p.voxel for p in self.exclude]
            (include_vox if kind == "include" else exclude_vox).append(voxel)
            working, windows = self._recompute(include_vox, exclude_vox, self.working_logits)

            old_working = self.working_logits
            (self.include if kind == "include" else self.exclude).append(record)
            self.working_logits = working
            self.active_windows = windows
            self._invalidate_ensemble()
            self.revision += 1
            return self._summary(old_working, voxel=voxel)

    def remove_prompt(self, index: int, kind: str) -> MutationSummary:
        """Drop one prompt and recompute from scratch (no previous-mask feed)."""
        if kind not in ("include", "exclude"):
            raise ValueError(f"prompt kind must be include or exclude, got {kind!r}")
        with self.lock:
            records = self.include if kind == "include" else self.exclude
            if index < 0 or index >= len(records):
                raise IndexOutOfRange(f"no {kind} prompt at index {index}")
            include_vox = [p.voxel for i, p in enumerate(self.include) if kind != "include" or i != index]
            exclude_vox = [p.voxel for i, p in enumerate(self.exclude) if kind != "exclude" or i != index]
            working, windows = self._recompute(include_vox, exclude_vox, None)

            old_working = self.working_logits
            del records[index]
            self.working_logits = working
            self.active_windows = windows
            self._invalidate_ensemble()
            self.revision += 1
            return self._summary(old_working)

    def commit_mask(self, label: str, threshold: float | None = None) -> str:
        """Binarize the working logits into the segmentation node."""
        with self.lock:
            if self.working_logits is None:
                raise NoWorkingMask("no working segmentation to commit")
            tau = self.default_threshold if threshold is None else threshold
            mask_id = f"mask-{len(self.committed) + 1}"
            mask = binarize(self.working_logits, tau)
            mask.setflags(write=False)
            self.committed.append(
                CommittedMask(mask_id=mask_id, label=label, mask=mask, threshold=tau)
            )
            self.include.clear()
            self.exclude.clear()
            self.working_logits = None
            self.active_windows = []
            self._invalidate_ensemble()
            self.revision += 1
            return mask_id

    def switch_backend(self, backend: PromptableBackend) -> None:
        """Change the active model; committed masks survive, live state resets."""
        with self.lock:
            self.backend = backend
            self.include.clear()
            self.exclude.clear()
            self.working_logits = None
            self.active_windows = []
            self._invalidate_ensemble()
            self.revision += 1

    def get_mask(self, mask_id: str) -> CommittedMask:
        with self.lock:
            for m in self.committed:
                if m.mask_id == mask_id:
                    return m
        raise IndexOutOfRange(f"no committed mask {mask_id!r}")


def create_session(
    nifti_bytes: bytes,
    backend_name: str,
    registry: BackendRegistry,
    default_threshold: float = 0.0,
) -> Session:
    """Load a volume and open a fresh session bound to the named backend."""
    backend = registry.get(backend_name)
    volume, header = read_nifti(nifti_bytes)
    return Session(
        volume=volume, header=header, backend=backend, default_threshold=default_threshold
    )
