"""Self-ensembling uncertainty quantification.

From the current working segmentation, pseudo point prompts are resampled
from the binarized mask's foreground and the decoder is re-run N times
against the already-cached embedding (the encoder is never invoked). The
per-voxel mean of the N logit volumes is the ensemble segmentation; the
per-voxel population standard deviation is the uncertainty map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import PromptSet, binarize
from .errors import EmptyMask, IndexOutOfRange, NoWorkingMask
from .geometry import VoxelIndex, map_prompt, place_window
from .nifti import NiftiHeader, Volume, write_nifti
from .session import Session

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class EnsembleConfig:
    """Knobs of one uncertainty run.

    ``points_per_run`` defaults to the session's user include-prompt count
    (at least 1) when left unset. ``parallel`` runs the decode passes on a
    thread pool; members are reduced in run order either way, so it cannot
    change the result.
    """

    runs: int = 5
    points_per_run: int | None = None
    threshold: float = 0.0
    seed: int = 0
    parallel: bool = False

    def __post_init__(self):
        if self.runs < 2:
            raise ValueError("an ensemble needs at least 2 runs for a meaningful spread")
        if self.points_per_run is not None and self.points_per_run < 1:
            raise ValueError("points_per_run must be >= 1")


@dataclass(frozen=True)
class EnsembleResult:
    mean_logits: np.ndarray
    uncertainty: np.ndarray
    runs: int
    points_per_run: int
    seed: int
    initial_foreground: int


def sample_prompts(mask: np.ndarray, k: int, seed: int, run_index: int) -> PromptSet:
    """Draw k include points uniformly from the mask's foreground.

    Sampling is without replacement, falling back to with-replacement when
    the foreground is smaller than k. Deterministic in (seed, run_index).
    """
    foreground = np.argwhere(np.asarray(mask) > 0)
    if foreground.shape[0] == 0:
        raise EmptyMask("cannot sample prompts from an empty mask")
    rng = np.random.default_rng([seed & _U64, run_index])
    replace = foreground.shape[0] < k
    chosen = rng.choice(foreground.shape[0], size=k, replace=replace)
    points = tuple(VoxelIndex(*(int(v) for v in foreground[c])) for c in chosen)
    return PromptSet(include=points)


def ensemble_statistics(members: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population (1/N) standard deviation across ensemble members.

    Computed against the first member as shift (mean = m1 + mean(mi - m1)),
    which is algebraically identical but keeps bitwise-equal members at
    exactly zero spread (sum(N*x)/N need not round back to x).
    """
    stack = np.stack([np.asarray(m, dtype=np.float64) for m in members])
    shifted = stack - stack[0]
    mean = stack[0] + shifted.sum(axis=0) / stack.shape[0]
    variance = ((stack - mean) ** 2).sum(axis=0) / stack.shape[0]
    return mean, np.sqrt(variance)


def _window_coverage(session: Session) -> np.ndarray:
    dims = session.volume.dims
    covered = np.zeros(dims, dtype=bool)
    for w in session.active_windows:
        lo = [max(0, w.region.offset[a]) for a in range(3)]
        hi = [min(dims[a], w.region.offset[a] + w.region.dims[a]) for a in range(3)]
        covered[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = True
    return covered


def run_ensemble(session: Session, config: EnsembleConfig) -> EnsembleResult:
    """Decode-only self-ensemble over the session's cached embedding(s)."""
    with session.lock:
        if session.working_logits is None or not session.active_windows:
            raise NoWorkingMask("run an initial segmentation before ensembling")
        backend = session.backend
        initial_mask = binarize(session.working_logits, config.threshold)
        # sampled points must be mappable into a cached window
        eligible = initial_mask.astype(bool) & _window_coverage(session)
        if not eligible.any():
            raise EmptyMask("initial mask has no foreground inside the fitted window")
        k = config.points_per_run or max(1, len(session.include))

        encode_calls_before = backend.encode_calls
        background = session._background()
        windows = list(session.active_windows)
        slice_of = {w.region.offset[2]: w for w in windows}

        def one_member(run: int) -> np.ndarray:
            prompts = sample_prompts(eligible, k, config.seed, run)
            member = np.full(session.volume.dims, background, dtype=np.float64)
            if backend.descriptor.dimensionality == "2d":
                groups: dict[int, list[VoxelIndex]] = {}
                for p in prompts.include:
                    groups.setdefault(p.k, []).append(p)
                for key in sorted(groups):
                    window = slice_of[key]
                    mapped = tuple(map_prompt(v, window.region) for v in groups[key])
                    logits = backend.decode(
                        window.embedding, PromptSet(include=mapped), None, window.window_volume
                    )
                    place_window(logits, window.region, member)
            else:
                window = windows[0]
                mapped = tuple(map_prompt(v, window.region) for v in prompts.include)
                logits = backend.decode(
                    window.embedding, PromptSet(include=mapped), None, window.window_volume
                )
                place_window(logits, window.region, member)
            return member

        run_ids = range(1, config.runs + 1)
        if config.parallel:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=min(config.runs, 8)) as pool:
                members = list(pool.map(one_member, run_ids))
        else:
            members = [one_member(run) for run in run_ids]

        assert backend.encode_calls == encode_calls_before, "ensemble must not re-encode"
        mean, std = ensemble_statistics(members)
        session.ensemble_logits = mean
        session.uncertainty = std
        session.revision += 1
        return EnsembleResult(
            mean_logits=mean,
            uncertainty=std,
            runs=config.runs,
            points_per_run=k,
            seed=config.seed,
            initial_foreground=int(initial_mask.sum()),
        )


def uncertainty_to_heatmap(uncertainty: np.ndarray, axis: int, index: int) -> np.ndarray:
    """One slice of the volume-normalized uncertainty, in [0, 1].

    Normalization is min-max over the whole volume; a constant volume maps
    to all zeros.
    """
    u = np.asarray(uncertainty, dtype=np.float64)
    if axis not in (0, 1, 2):
        raise IndexOutOfRange(f"axis must be 0, 1 or 2, got {axis}")
    if index < 0 or index >= u.shape[axis]:
        raise IndexOutOfRange(f"slice {index} outside axis extent {u.shape[axis]}")
    lo, hi = float(u.min()), float(u.max())
    if hi == lo:
        normalized = np.zeros_like(u)
    else:
        normalized = (u - lo) / (hi - lo)
    return np.take(normalized, index, axis=axis)


def export_uncertainty(session: Session) -> bytes:
    """Serialize the last uncertainty volume as float32 NIfTI bytes."""
    with session.lock:
        if session.uncertainty is None:
            raise NoWorkingMask("no uncertainty volume computed yet")
        vol = Volume(
            data=session.uncertainty.astype(np.float32), affine=session.volume.affine
        )
        return write_nifti(vol, NiftiHeader.for_volume(vol, descrip="uncertainty"))
