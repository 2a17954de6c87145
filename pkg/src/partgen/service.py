"""JSON-over-HTTP inference API for sampling, editing, and interpolation.

One process holds one loaded model. Inference runs on a bounded worker
pool (default two workers, FIFO); results land in an in-memory LRU shape
store so edits and interpolations can reference earlier results by id.
Every response embeds the OBJ text directly: desk-scale meshes are small
and a single round trip keeps clients trivial.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import logging
import threading
import uuid
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import pipeline
from .editpipe import detect_edited_parts, interpolate_encodings, part_swap
from .errors import ContractError
from .shapegen import decode_parts, obj_text
from .sketchnet import SketchEncoding, aggregate_views

API_VERSION = 1
STORE_CAP = 256
WORKERS = 2

log = logging.getLogger("partgen.service")


@dataclass
class StoredShape:
    shape_id: str
    latent: object
    obj: str
    view_encodings: dict        # view_index -> SketchEncoding
    aggregate: SketchEncoding
    seed: int
    steps: Optional[int]
    parent_id: Optional[str] = None
    edit_report: Optional[dict] = None


@dataclass
class ServiceState:
    mesh_res: int = 48
    profile: str = "desk"
    checkpoint: str = ""
    params: object = None
    encoder: object = None
    status: str = "loading"
    store: OrderedDict = field(default_factory=OrderedDict)
    lock: threading.Lock = field(default_factory=threading.Lock)
    pending: int = 0


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _decode_mask(b64: str, raster: int) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
    except Exception:
        raise ApiError(400, "mask is not valid base64") from None
    if len(raw) != raster * raster:
        raise ApiError(400, f"mask length {len(raw)} != {raster}x{raster}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(raster, raster).astype(np.float64)


def _parse_sketches(body: dict, raster: int) -> dict:
    sketches = body.get("sketches")
    if not isinstance(sketches, list) or not sketches:
        raise ApiError(400, "need at least one sketch")
    out = {}
    for entry in sketches:
        view = entry.get("view_index")
        if not isinstance(view, int) or not (0 <= view <= 5):
            raise ApiError(400, "view_index must be an integer in 0..5")
        out[view] = _decode_mask(entry.get("mask", ""), raster)
    return out


def _record_json(shape: StoredShape, gaussians, timing_ms: float) -> dict:
    return {
        "api_version": API_VERSION,
        "shape_id": shape.shape_id,
        "parent_id": shape.parent_id,
        "obj": shape.obj,
        "part_gaussians": [
            {"mu": g.mu.tolist(), "sigma": g.sigma.tolist(), "pi": g.pi} for g in gaussians
        ],
        "edit_report": shape.edit_report,
        "timing_ms": round(timing_ms, 2),
    }


def create_app(loader, mesh_res: int = 48, profile: str = "desk",
               checkpoint_path: str = "", synchronous_load: bool = False) -> FastAPI:
    """Build the app; ``loader()`` must return (denoiser params, encoder params).

    The loader runs on a background thread so the server answers health
    probes as "loading" until the model is in memory.
    """
    state = ServiceState(mesh_res=mesh_res, profile=profile, checkpoint=str(checkpoint_path))
    app = FastAPI(title="partgen inference service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    executor = ThreadPoolExecutor(max_workers=WORKERS)
    app.state.service = state

    def _load():
        params, encoder = loader()
        state.params = params
        state.encoder = encoder
        digest = hashlib.sha256()
        for name in sorted(params.weights):
            digest.update(name.encode())
            digest.update(params.weights[name].tobytes())
        state.checkpoint = state.checkpoint or digest.hexdigest()[:16]
        state.checkpoint_hash = digest.hexdigest()[:16]
        state.status = "ready"

    if synchronous_load:
        _load()
    else:
        threading.Thread(target=_load, daemon=True).start()

    def _ready():
        if state.status != "ready":
            raise ApiError(409, "model not loaded yet")

    def _store_put(shape: StoredShape):
        with state.lock:
            state.store[shape.shape_id] = shape
            while len(state.store) > STORE_CAP:
                state.store.popitem(last=False)

    def _store_get(shape_id) -> StoredShape:
        with state.lock:
            shape = state.store.get(shape_id)
        if shape is None:
            raise ApiError(404, f"unknown shape_id {shape_id!r}")
        return shape

    async def _run(job):
        with state.lock:
            state.pending += 1
        try:
            return await asyncio.wrap_future(executor.submit(job))
        finally:
            with state.lock:
                state.pending -= 1

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.exception_handler(Exception)
    async def _internal(_req: Request, exc: Exception):
        incident = uuid.uuid4().hex[:12]
        log.exception("internal error %s", incident)
        return JSONResponse(status_code=500, content={"error": "internal error",
                                                      "incident": incident})

    @app.get("/api/health")
    def health():
        raster = state.encoder.config.raster if state.encoder is not None else None
        return {
            "api_version": API_VERSION,
            "status": state.status,
            "model_checkpoint": getattr(state, "checkpoint_hash", "") if state.status == "ready" else "",
            "profile": state.profile,
            "queue_depth": state.pending,
            "raster": {"h": raster, "w": raster} if raster else None,
        }

    def _generate_record(masks: dict, seed: int, steps, parent_id=None,
                         edit_report=None, view_encodings=None, aggregate=None):
        t0 = perf_counter()
        if view_encodings is None:
            view_encodings = {v: pipeline.encode_mask(m, state.encoder)
                              for v, m in sorted(masks.items())}
            aggregate = aggregate_views(list(view_encodings.values()))
        latent = pipeline.generate(state.params, seed=seed, steps=steps, cond=aggregate)
        mesh = pipeline.mesh_latent(latent, state.mesh_res)
        shape = StoredShape(
            shape_id=uuid.uuid4().hex[:12], latent=latent, obj=obj_text(mesh),
            view_encodings=view_encodings, aggregate=aggregate, seed=seed, steps=steps,
            parent_id=parent_id, edit_report=edit_report)
        _store_put(shape)
        return _record_json(shape, decode_parts(latent).gaussians,
                            (perf_counter() - t0) * 1e3)

    @app.post("/api/generate")
    async def generate(request: Request):
        _ready()
        body = await request.json()
        masks = _parse_sketches(body, state.encoder.config.raster)
        seed = int(body.get("seed", 0))
        steps = body.get("steps")
        steps = int(steps) if steps is not None else None
        return await _run(lambda: _generate_record(masks, seed, steps))

    @app.post("/api/edit")
    async def edit(request: Request):
        _ready()
        body = await request.json()
        parent = _store_get(body.get("shape_id"))
        view = body.get("view_index")
        if not isinstance(view, int) or view not in parent.view_encodings:
            raise ApiError(400, "view_index must name a view of the parent shape")
        mask = _decode_mask(body.get("mask", ""), state.encoder.config.raster)
        seed = int(body.get("seed", parent.seed))

        def job():
            t0 = perf_counter()
            eta_view = parent.view_encodings[view]
            eta_prime = pipeline.encode_mask(mask, state.encoder)
            report = detect_edited_parts(eta_view, eta_prime)
            new_views = dict(parent.view_encodings)
            new_views[view] = eta_prime
            new_aggregate = aggregate_views(list(new_views.values()))
            base = pipeline.generate(state.params, seed=seed, steps=parent.steps,
                                     cond=parent.aggregate)
            edited = pipeline.generate(state.params, seed=seed, steps=parent.steps,
                                       cond=new_aggregate)
            merged = part_swap(base, edited, report.edited_part_indices)
            mesh = pipeline.mesh_latent(merged, state.mesh_res)
            shape = StoredShape(
                shape_id=uuid.uuid4().hex[:12], latent=merged, obj=obj_text(mesh),
                view_encodings=new_views, aggregate=new_aggregate, seed=seed,
                steps=parent.steps, parent_id=parent.shape_id, edit_report=report.to_dict())
            _store_put(shape)
            return _record_json(shape, decode_parts(merged).gaussians,
                                (perf_counter() - t0) * 1e3)

        return await _run(job)

    @app.post("/api/interpolate")
    async def interpolate(request: Request):
        _ready()
        body = await request.json()
        shape_a = _store_get(body.get("shape_id_a"))
        shape_b = _store_get(body.get("shape_id_b"))
        lam = body.get("lambda")
        if not isinstance(lam, (int, float)) or not (0.0 <= float(lam) <= 1.0):
            raise ApiError(400, "lambda must lie in [0, 1]")
        seed = int(body.get("seed", shape_a.seed))

        def job():
            t0 = perf_counter()
            mixed = interpolate_encodings(shape_a.aggregate, shape_b.aggregate, float(lam))
            latent = pipeline.generate(state.params, seed=seed, steps=shape_a.steps, cond=mixed)
            mesh = pipeline.mesh_latent(latent, state.mesh_res)
            shape = StoredShape(
                shape_id=uuid.uuid4().hex[:12], latent=latent, obj=obj_text(mesh),
                view_encodings={}, aggregate=mixed, seed=seed, steps=shape_a.steps,
                parent_id=shape_a.shape_id)
            _store_put(shape)
            return _record_json(shape, decode_parts(latent).gaussians,
                                (perf_counter() - t0) * 1e3)

        return await _run(job)

    return app


def run_server(params, encoder, port: int = 8799, mesh_res: int = 48,
               profile: str = "desk", checkpoint_path: str = "") -> None:
    import uvicorn

    app = create_app(lambda: (params, encoder), mesh_res=mesh_res, profile=profile,
                     checkpoint_path=str(checkpoint_path))
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
