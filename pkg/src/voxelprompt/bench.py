"""Wall-clock latency harness.

Per-backend timing of the encode, decode, full-interaction and ensemble
phases over a seeded phantom volume (or a user-supplied scan). Slice-wise
backends are reported per slice with the slice count recorded. Absolute
times are hardware-bound; the meaningful outputs are orderings and ratios,
which is what the invariant checks assert.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .backend import PromptableBackend, PromptSet
from .geometry import RasPoint, VoxelIndex, fit_to_model, map_prompt, voxel_to_ras
from .nifti import Volume
from .phantom import make_phantom, sphere_center_voxel
from .session import Session
from .uncertainty import EnsembleConfig, run_ensemble
from .nifti import NiftiHeader

PHASES = ("encode", "decode", "full-interaction", "ensemble")

_COLUMNS = (
    "backend",
    "phase",
    "mode",
    "dims",
    "repetitions",
    "mean_s",
    "std_s",
    "min_s",
    "max_s",
    "slice_count",
)


@dataclass(frozen=True)
class TimingReport:
    backend: str
    phase: str
    repetitions: int
    mean_s: float
    std_s: float
    min_s: float
    max_s: float
    dims: tuple[int, int, int]
    mode: str  # "volume-level" | "slice-level"
    slice_count: int | None = None

    def __post_init__(self):
        if not (self.min_s <= self.mean_s <= self.max_s):
            raise ValueError("timing summary violates min <= mean <= max")
        if self.repetitions < 3:
            raise ValueError("a report needs at least 3 repetitions")


def _measure(fn: Callable[[], object], repetitions: int, warmup: int) -> tuple[float, ...]:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    arr = np.asarray(samples)
    return float(arr.mean()), float(arr.std()), float(arr.min()), float(arr.max())


def _pick_prompts(volume: Volume, count: int, slice_only: bool) -> list[VoxelIndex]:
    center = sphere_center_voxel(volume)
    dims = volume.dims
    offsets = [(0, 0, 0), (2, 0, 0), (0, 2, 0), (-2, 0, 0), (0, -2, 0), (2, 2, 0)]
    prompts = []
    for n in range(count):
        di, dj, dk = offsets[n % len(offsets)]
        if slice_only:
            dk = 0
        prompts.append(
            VoxelIndex(
                min(max(center[0] + di, 0), dims[0] - 1),
                min(max(center[1] + dj, 0), dims[1] - 1),
                min(max(center[2] + dk, 0), dims[2] - 1),
            )
        )
    return prompts


def time_backend(
    backend: PromptableBackend,
    dims: Sequence[int] = (128, 128, 128),
    prompt_count: int = 1,
    repetitions: int = 10,
    warmup: int = 1,
    ensemble_runs: int = 5,
    seed: int = 0,
    volume: Volume | None = None,
    parallel_ensemble: bool = False,
) -> list[TimingReport]:
    """Time every phase of one backend on a phantom (or supplied) volume."""
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    if warmup < 1:
        raise ValueError("at least one discarded warmup iteration is required")

    vol = volume if volume is not None else make_phantom(dims=dims, seed=seed)
    dims = vol.dims
    slice_wise = backend.descriptor.dimensionality == "2d"
    mode = "slice-level" if slice_wise else "volume-level"
    slice_count = dims[2] if slice_wise else None

    prompts = _pick_prompts(vol, prompt_count, slice_only=slice_wise)
    fitted, region = fit_to_model(vol, prompts, backend.descriptor.input_dims)
    mapped = PromptSet(include=tuple(map_prompt(p, region) for p in prompts))

    def encode_phase():
        backend.clear_cache()
        backend.encode(fitted)

    embedding = backend.encode(fitted)

    def decode_phase():
        backend.decode(embedding, mapped, None, fitted)

    header = NiftiHeader.for_volume(vol)
    ras_prompts = [voxel_to_ras(p, vol.affine) for p in prompts]

    def interaction_phase():
        backend.clear_cache()
        session = Session(vol, header, backend)
        for p in ras_prompts:
            session.add_prompt(RasPoint(*p), "include")

    ensemble_session = Session(vol, header, backend)
    for p in ras_prompts:
        ensemble_session.add_prompt(RasPoint(*p), "include")
    ensemble_config = EnsembleConfig(runs=ensemble_runs, seed=seed, parallel=parallel_ensemble)

    def ensemble_phase():
        run_ensemble(ensemble_session, ensemble_config)

    reports = []
    for phase, fn in (
        ("encode", encode_phase),
        ("decode", decode_phase),
        ("full-interaction", interaction_phase),
        ("ensemble", ensemble_phase),
    ):
        mean, std, lo, hi = _measure(fn, repetitions, warmup)
        reports.append(
            TimingReport(
                backend=backend.descriptor.name,
                phase=phase,
                repetitions=repetitions,
                mean_s=mean,
                std_s=std,
                min_s=lo,
                max_s=hi,
                dims=dims,
                mode=mode,
                slice_count=slice_count,
            )
        )
        if mean > 0 and std / mean >= 0.5:
            warnings.warn(
                f"noisy timing for {backend.descriptor.name}/{phase}: "
                f"std/mean = {std / mean:.2f}",
                stacklevel=2,
            )
    return reports


def _sorted_rows(reports: Sequence[TimingReport]) -> list[TimingReport]:
    order = {phase: i for i, phase in enumerate(PHASES)}
    return sorted(reports, key=lambda r: (order.get(r.phase, 99), r.mean_s))


def report_table(reports: Sequence[TimingReport]) -> tuple[str, str]:
    """Human table plus machine records (tab-separated, one row per line)."""
    rows = _sorted_rows(reports)
    widths = (14, 18, 14, 14, 6, 10, 10, 10, 10, 6)
    header = "".join(name.ljust(w) for name, w in zip(_COLUMNS, widths))
    lines = [header, "-" * len(header)]
    for r in rows:
        cells = (
            r.backend,
            r.phase,
            r.mode,
            "x".join(str(d) for d in r.dims),
            str(r.repetitions),
            f"{r.mean_s:.4f}",
            f"{r.std_s:.4f}",
            f"{r.min_s:.4f}",
            f"{r.max_s:.4f}",
            "" if r.slice_count is None else str(r.slice_count),
        )
        lines.append("".join(str(c).ljust(w) for c, w in zip(cells, widths)))

    records = ["\t".join(_COLUMNS)]
    for r in rows:
        records.append(
            "\t".join(
                [
                    r.backend,
                    r.phase,
                    r.mode,
                    ",".join(str(d) for d in r.dims),
                    str(r.repetitions),
                    repr(r.mean_s),
                    repr(r.std_s),
                    repr(r.min_s),
                    repr(r.max_s),
                    "" if r.slice_count is None else str(r.slice_count),
                ]
            )
        )
    return "\n".join(lines), "\n".join(records) + "\n"


def parse_records(text: str) -> list[TimingReport]:
    """Inverse of report_table's machine records."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t") != list(_COLUMNS):
        raise ValueError("unrecognized records header")
    out = []
    for line in lines[1:]:
        cells = line.split("\t")
        out.append(
            TimingReport(
                backend=cells[0],
                phase=cells[1],
                mode=cells[2],
                dims=tuple(int(d) for d in cells[3].split(",")),
                repetitions=int(cells[4]),
                mean_s=float(cells[5]),
                std_s=float(cells[6]),
                min_s=float(cells[7]),
                max_s=float(cells[8]),
                slice_count=int(cells[9]) if cells[9] else None,
            )
        )
    return out
