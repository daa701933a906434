"""HTTP front door for the segmentation engine.

Sessions, prompts, masks, slices, overlays and uncertainty are exposed as a
small JSON-over-HTTP API with binary NIfTI upload/export. Anything a client
does over these endpoints produces byte-identical engine state to the same
calls made in-process: handlers only marshal, the session does the work.

Mutating requests may carry an ``If-Match-Revision`` header; when it does
not match the session's current revision the request fails with 409 and no
state changes. Mutating responses always echo the new revision.
"""

from __future__ import annotations

import base64
import threading
import time
from typing import Callable, Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request, Response
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from . import geometry
from .backend import binarize
from .config import ServiceConfig, build_registry
from .errors import IndexOutOfRange, VoxelPromptError
from .nifti import NiftiHeader, Volume, write_nifti
from .session import Session, create_session
from .uncertainty import EnsembleConfig, run_ensemble, uncertainty_to_heatmap

REVISION_HEADER = "If-Match-Revision"


class PromptIn(BaseModel):
    point: tuple[float, float, float]  # RAS millimeters
    kind: Literal["include", "exclude"]


class MaskIn(BaseModel):
    label: str
    threshold: float | None = None


class BackendIn(BaseModel):
    name: str


class EnsembleIn(BaseModel):
    runs: int | None = None
    points_per_run: int | None = None
    threshold: float | None = None
    seed: int | None = None
    parallel: bool = False


class SessionStore:
    """Sessions by id with idle eviction; sweep runs on every access."""

    def __init__(self, idle_seconds: float):
        self._sessions: dict[str, Session] = {}
        self._last_access: dict[str, float] = {}
        self._lock = threading.Lock()
        self._idle = idle_seconds

    def add(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.id] = session
            self._last_access[session.id] = time.monotonic()

    def get(self, session_id: str) -> Session:
        now = time.monotonic()
        with self._lock:
            for sid in [s for s, t in self._last_access.items() if now - t > self._idle]:
                self._sessions.pop(sid, None)
                self._last_access.pop(sid, None)
            session = self._sessions.get(session_id)
            if session is None:
                raise HTTPException(404, detail=f"unknown session {session_id}")
            self._last_access[session_id] = now
            return session


def _expected_revision(request: Request) -> int | None:
    raw = request.headers.get(REVISION_HEADER)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise HTTPException(422, detail=f"bad {REVISION_HEADER} header {raw!r}") from None


def _mutate(session: Session, expected: int | None, fn: Callable):
    """Apply a mutation under the session lock with optional revision guard."""
    with session.lock:
        if expected is not None and session.revision != expected:
            raise HTTPException(
                409,
                detail=f"revision conflict: expected {expected}, is {session.revision}",
            )
        return fn()


def _slice_geometry(dims, axis: int, index: int) -> tuple[int, int, int, int]:
    if axis not in (0, 1, 2):
        raise HTTPException(422, detail="axis must be 0, 1 or 2")
    if not (0 <= index < dims[axis]):
        raise HTTPException(422, detail=f"slice {index} outside axis extent {dims[axis]}")
    u, v = [a for a in (0, 1, 2) if a != axis]
    return u, v, dims[u], dims[v]


def _pack_bits_slab(slab: np.ndarray) -> str:
    """Row-major (rows = second remaining axis) 1-bit packing, MSB first."""
    return base64.b64encode(np.packbits(slab.T.flatten())).decode("ascii")


def _gray_payload(slab: np.ndarray, wc: float, ww: float) -> str:
    ww = max(float(ww), 1e-9)
    norm = np.clip((slab.astype(np.float64) - (wc - 0.5 * ww)) / ww, 0.0, 1.0)
    gray = np.round(norm * 255.0).astype(np.uint8)
    return base64.b64encode(gray.T.tobytes()).decode("ascii")


def _summary_json(session: Session) -> dict:
    d = session.backend.descriptor
    return {
        "id": session.id,
        "revision": session.revision,
        "dims": list(session.volume.dims),
        "affine": session.volume.affine.tolist(),
        "intensity_range": list(session.volume.intensity_range),
        "backend": {
            "name": d.name,
            "input_dims": list(d.input_dims),
            "stride": d.stride,
            "dimensionality": d.dimensionality,
        },
        "include_count": len(session.include),
        "exclude_count": len(session.exclude),
        "has_working_mask": session.working_logits is not None,
        "has_uncertainty": session.uncertainty is not None,
        "masks": [{"id": m.mask_id, "label": m.label} for m in session.committed],
    }


def _mutation_json(session: Session, summary) -> dict:
    return {
        "revision": summary.revision,
        "foreground_voxels": summary.foreground_voxels,
        "changed_bbox": summary.changed_bbox,
        "include_count": summary.include_count,
        "exclude_count": summary.exclude_count,
        "voxel": list(summary.voxel) if summary.voxel is not None else None,
    }


def create_app(config: ServiceConfig | None = None, ui_dir: str | None = None) -> FastAPI:
    config = config or ServiceConfig()
    registry = build_registry(config)
    store = SessionStore(config.session_idle_seconds)

    app = FastAPI(title="voxelprompt", version="0.1.0")
    app.state.config = config
    app.state.registry = registry
    app.state.store = store

    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(VoxelPromptError)
    async def engine_error(request: Request, exc: VoxelPromptError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=422, content={"error": exc.code, "detail": str(exc)})

    @app.get("/backends")
    def list_backends():
        return [
            {
                "name": d.name,
                "input_dims": list(d.input_dims),
                "stride": d.stride,
                "dimensionality": d.dimensionality,
            }
            for d in registry.descriptors()
        ]

    @app.post("/sessions", status_code=201)
    async def open_session(request: Request, backend: str = Query(...)):
        raw = await request.body()
        if len(raw) > config.max_upload_bytes:
            raise HTTPException(507, detail="volume exceeds the configured upload cap")
        session = await run_in_threadpool(
            create_session, raw, backend, registry, config.default_threshold
        )
        store.add(session)
        return _summary_json(session)

    @app.get("/sessions/{sid}")
    def session_summary(sid: str):
        session = store.get(sid)
        with session.lock:
            return _summary_json(session)

    @app.get("/sessions/{sid}/prompts")
    def list_prompts(sid: str):
        session = store.get(sid)
        with session.lock:
            return {
                kind: [
                    {"ras": list(p.ras), "voxel": list(p.voxel)}
                    for p in getattr(session, kind)
                ]
                for kind in ("include", "exclude")
            }

    @app.get("/sessions/{sid}/slice")
    def get_slice(
        sid: str,
        axis: int = Query(..., ge=0, le=2),
        index: int = Query(..., ge=0),
        wc: float | None = None,
        ww: float | None = None,
    ):
        session = store.get(sid)
        with session.lock:
            dims = session.volume.dims
            u, v, width, height = _slice_geometry(dims, axis, index)
            lo, hi = session.volume.intensity_range
            wc = wc if wc is not None else (lo + hi) / 2.0
            ww = ww if ww is not None else (hi - lo)
            slab = np.take(session.volume.data, index, axis=axis)
            return {
                "axis": axis,
                "index": index,
                "width": width,
                "height": height,
                "window_center": wc,
                "window_width": ww,
                "pixels": _gray_payload(slab, wc, ww),
                "revision": session.revision,
            }

    @app.get("/sessions/{sid}/overlay")
    def get_overlay(
        sid: str,
        axis: int = Query(..., ge=0, le=2),
        index: int = Query(..., ge=0),
        uncertainty: int = Query(0, ge=0, le=1),
    ):
        session = store.get(sid)
        with session.lock:
            dims = session.volume.dims
            u, v, width, height = _slice_geometry(dims, axis, index)
            working = None
            if session.working_logits is not None:
                mask = binarize(session.working_logits, session.default_threshold)
                working = _pack_bits_slab(np.take(mask, index, axis=axis))
            committed = [
                {
                    "id": m.mask_id,
                    "label": m.label,
                    "bits": _pack_bits_slab(np.take(m.mask, index, axis=axis)),
                }
                for m in session.committed
            ]
            heat = None
            if uncertainty and session.uncertainty is not None:
                hm = uncertainty_to_heatmap(session.uncertainty, axis, index)
                heat = base64.b64encode(
                    np.round(hm.T * 255.0).astype(np.uint8).tobytes()
                ).decode("ascii")
            return {
                "axis": axis,
                "index": index,
                "width": width,
                "height": height,
                "working_mask": working,
                "committed_masks": committed,
                "uncertainty": heat,
                "bit_order": "msb-first",
                "revision": session.revision,
            }

    @app.post("/sessions/{sid}/prompts")
    async def add_prompt(sid: str, body: PromptIn, request: Request):
        session = store.get(sid)
        expected = _expected_revision(request)
        summary = await run_in_threadpool(
            _mutate,
            session,
            expected,
            lambda: session.add_prompt(geometry.RasPoint(*body.point), body.kind),
        )
        return _mutation_json(session, summary)

    @app.delete("/sessions/{sid}/prompts/{kind}/{index}")
    async def remove_prompt(
        sid: str, kind: Literal["include", "exclude"], index: int, request: Request
    ):
        session = store.get(sid)
        expected = _expected_revision(request)
        summary = await run_in_threadpool(
            _mutate, session, expected, lambda: session.remove_prompt(index, kind)
        )
        return _mutation_json(session, summary)

    @app.post("/sessions/{sid}/masks", status_code=201)
    async def commit_mask(sid: str, body: MaskIn, request: Request):
        session = store.get(sid)
        expected = _expected_revision(request)
        mask_id = await run_in_threadpool(
            _mutate, session, expected, lambda: session.commit_mask(body.label, body.threshold)
        )
        return {"mask_id": mask_id, "revision": session.revision}

    @app.post("/sessions/{sid}/backend")
    async def switch_backend(sid: str, body: BackendIn, request: Request):
        session = store.get(sid)
        expected = _expected_revision(request)
        backend = registry.get(body.name)
        await run_in_threadpool(
            _mutate, session, expected, lambda: session.switch_backend(backend)
        )
        return {"revision": session.revision, "backend": body.name}

    @app.post("/sessions/{sid}/uncertainty")
    async def ensemble(sid: str, body: EnsembleIn, request: Request):
        session = store.get(sid)
        expected = _expected_revision(request)
        ens_config = EnsembleConfig(
            runs=body.runs if body.runs is not None else config.ensemble_runs,
            points_per_run=(
                body.points_per_run if body.points_per_run is not None else config.ensemble_points
            ),
            threshold=(
                body.threshold if body.threshold is not None else config.default_threshold
            ),
            seed=body.seed if body.seed is not None else config.ensemble_seed,
            parallel=body.parallel,
        )
        result = await run_in_threadpool(
            _mutate, session, expected, lambda: run_ensemble(session, ens_config)
        )
        return {
            "revision": session.revision,
            "runs": result.runs,
            "points_per_run": result.points_per_run,
            "seed": result.seed,
            "initial_foreground": result.initial_foreground,
            "mean_uncertainty": float(result.uncertainty.mean()),
            "max_uncertainty": float(result.uncertainty.max()),
        }

    @app.get("/sessions/{sid}/export/{mask_id}")
    async def export_mask(sid: str, mask_id: str):
        session = store.get(sid)

        def build() -> tuple[bytes, str]:
            with session.lock:
                try:
                    committed = session.get_mask(mask_id)
                except IndexOutOfRange:
                    raise HTTPException(404, detail=f"unknown mask {mask_id}") from None
                vol = Volume(
                    data=committed.mask.astype(np.int16), affine=session.volume.affine
                )
                header = NiftiHeader.for_volume(vol, descrip=committed.label[:79])
                return write_nifti(vol, header, gzip_output=True), committed.label

        raw, label = await run_in_threadpool(build)
        return Response(
            content=raw,
            media_type="application/gzip",
            headers={"Content-Disposition": f'attachment; filename="{label}.nii.gz"'},
        )

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
