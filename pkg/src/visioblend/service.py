"""HTTP inference service: async generation jobs over a loaded model.

POST /api/v1/generate validates the request by hand (so error payloads are
exact and field-addressed), enqueues a sampling job and returns 202 with a
job id.  GET /api/v1/jobs/{id} reports progress and, once done, the result
PNG.  GET /api/v1/models advertises the working resolution for the canvas UI,
which is served statically at / when a bundle directory is provided.
"""

from __future__ import annotations

import base64
import binascii
import json
import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import training
from .diffusion import ConditionPair, ControlSettings, sample_loop
from .images import decode_png, encode_png
from .schedule import NoiseSchedule, make_schedule
from .unet import UNet, make_denoiser

MAX_BODY_BYTES = 8 * 1024 * 1024
DEFAULT_RETENTION_S = 600.0

_STATUS_ORDER = {"queued": 0, "running": 1, "done": 2, "failed": 2}


@dataclass
class JobRecord:
    job_id: str
    status: str = "queued"
    progress: float = 0.0
    result_png: Optional[str] = None  # base64
    error: Optional[str] = None
    created_at: float = 0.0
    finished_at: Optional[float] = None

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "status": self.status,
            "progress": self.progress,
            "result_png": self.result_png,
            "error": self.error,
            "created_at": self.created_at,
            "finished_at": self.finished_at,
        }


class JobStore:
    """Thread-safe job records with forward-only status transitions and
    eviction of finished jobs older than the retention window."""

    def __init__(self, retention_s: float = DEFAULT_RETENTION_S, clock: Callable[[], float] = time.time):
        self.retention_s = retention_s
        self.clock = clock
        self._lock = threading.Lock()
        self._jobs: dict[str, JobRecord] = {}

    def create(self) -> JobRecord:
        rec = JobRecord(job_id=str(uuid.uuid4()), created_at=self.clock())
        with self._lock:
            self._jobs[rec.job_id] = rec
        return rec

    def get(self, job_id: str) -> Optional[JobRecord]:
        with self._lock:
            rec = self._jobs.get(job_id)
            return None if rec is None else JobRecord(**rec.to_json())

    def update(self, job_id: str, **fields) -> None:
        with self._lock:
            rec = self._jobs.get(job_id)
            if rec is None:
                return
            new_status = fields.get("status")
            if new_status is not None and _STATUS_ORDER[new_status] < _STATUS_ORDER[rec.status]:
                raise ValueError(f"illegal status transition {rec.status} -> {new_status}")
            for k, v in fields.items():
                setattr(rec, k, v)
            if new_status in ("done", "failed") and rec.finished_at is None:
                rec.finished_at = self.clock()

    def evict_expired(self) -> None:
        now = self.clock()
        with self._lock:
            dead = [
                jid
                for jid, rec in self._jobs.items()
                if rec.status in ("done", "failed")
                and rec.finished_at is not None
                and now - rec.finished_at > self.retention_s
            ]
            for jid in dead:
                del self._jobs[jid]

    def __len__(self) -> int:
        with self._lock:
            return len(self._jobs)


@dataclass
class SamplerBundle:
    """Everything the service needs to run generation: the (EMA) network,
    its noise schedule and the working resolution."""

    model: UNet
    sched: NoiseSchedule
    height: int
    width: int
    model_id: str = "default"


def bundle_from_checkpoint(path, use_raw: bool = False, size: Optional[tuple[int, int]] = None) -> SamplerBundle:
    """Load a trained checkpoint into a servable bundle (EMA weights unless
    use_raw).  Resolution comes from the checkpoint metadata unless given."""
    state, sched, meta = training.load_checkpoint(path)
    model = state.model
    if not use_raw:
        with torch.no_grad():
            for name, p in model.named_parameters():
                p.copy_(state.ema[name])
    model.eval()
    if size is None:
        hw = meta.get("image_size")
        if hw is None:
            raise ValueError(f"{path} does not record an image size; pass one explicitly")
        size = (int(hw[0]), int(hw[1]))
    return SamplerBundle(model=model, sched=sched, height=size[0], width=size[1])


class _RequestError(Exception):
    def __init__(self, message: str, field_name: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.field_name = field_name

    def response(self) -> JSONResponse:
        body = {"error": self.message}
        if self.field_name:
            body["field"] = self.field_name
        return JSONResponse(body, status_code=400)


def _require_number(payload: dict, name: str, default: float) -> float:
    v = payload.get(name, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _RequestError(f"{name} must be a number", name)
    return float(v)


def _decode_field(payload: dict, name: str, channels: int, h: int, w: int) -> Optional[np.ndarray]:
    b64 = payload.get(name)
    if b64 is None:
        return None
    if not isinstance(b64, str):
        raise _RequestError(f"{name} must be a base64 string", name)
    try:
        raw = base64.b64decode(b64, validate=True)
        img = decode_png(raw, channels=channels)
    except (binascii.Error, ValueError, OSError) as e:
        raise _RequestError(f"{name} is not a valid PNG: {e}", name) from e
    if img.shape[:2] != (h, w):
        got = f"{img.shape[0]}x{img.shape[1]}"
        raise _RequestError(f"{name} must decode to {h}x{w}, got {got}", name)
    return img


@dataclass
class _JobSpec:
    cond: ConditionPair
    settings: ControlSettings
    seed: int
    sched: NoiseSchedule
    shape: tuple[int, int]


def _parse_generate(payload: dict, bundle: SamplerBundle) -> _JobSpec:
    h, w = bundle.height, bundle.width

    s_sketch = _require_number(payload, "s_sketch", 0.0)
    if s_sketch < 0:
        raise _RequestError("s_sketch must be ≥ 0", "s_sketch")
    s_stroke = _require_number(payload, "s_stroke", 0.0)
    if s_stroke < 0:
        raise _RequestError("s_stroke must be ≥ 0", "s_stroke")
    realism = _require_number(payload, "realism", 0.0)
    if not 0.0 <= realism <= 1.0:
        raise _RequestError("realism must be in [0, 1]", "realism")

    seed = payload.get("seed")
    if seed is None:
        seed = int.from_bytes(os.urandom(8), "little")
    elif isinstance(seed, bool) or not isinstance(seed, int):
        raise _RequestError("seed must be an integer", "seed")

    steps = payload.get("steps")
    sched = bundle.sched
    if steps is not None:
        if isinstance(steps, bool) or not isinstance(steps, int) or steps < 1:
            raise _RequestError("steps must be a positive integer", "steps")
        sched = make_schedule(steps, float(bundle.sched.betas[0]), float(bundle.sched.betas[-1]))

    raw_sketch = _decode_field(payload, "sketch_png", 1, h, w)
    sketch = None
    if raw_sketch is not None:
        sketch = np.where(raw_sketch < 0.0, -1.0, 1.0).astype(np.float32)
    stroke = _decode_field(payload, "stroke_png", 3, h, w)
    reference = _decode_field(payload, "reference_png", 3, h, w)

    if realism > 0.0 and reference is None:
        if stroke is None:
            raise _RequestError("realism > 0 requires reference_png or stroke_png", "realism")
        reference = stroke

    cond = ConditionPair(sketch=sketch, stroke=stroke)
    settings = ControlSettings(
        s_sketch=s_sketch,
        s_stroke=s_stroke,
        realism_stop=realism,
        reference=reference if realism > 0.0 else None,
    )
    return _JobSpec(cond=cond, settings=settings, seed=int(seed), sched=sched, shape=(h, w))


def _run_job(bundle: SamplerBundle, store: JobStore, job_id: str, spec: _JobSpec) -> None:
    try:
        store.update(job_id, status="running")
        denoiser = make_denoiser(bundle.model)

        def on_progress(t: int, total: int) -> None:
            store.update(job_id, progress=(total - t) / total)

        rng = np.random.default_rng(spec.seed)
        img = sample_loop(
            denoiser,
            spec.shape,
            spec.cond,
            spec.settings,
            spec.sched,
            rng,
            progress=on_progress,
        )
        png = base64.b64encode(encode_png(img)).decode("ascii")
        store.update(job_id, status="done", progress=1.0, result_png=png)
    except Exception as e:  # surfaced to the poller, never crashes the worker
        store.update(job_id, status="failed", error=str(e))


def create_app(
    bundle: Optional[SamplerBundle] = None,
    workers: int = 1,
    retention_s: float = DEFAULT_RETENTION_S,
    clock: Callable[[], float] = time.time,
    static_dir: Optional[Path] = None,
) -> FastAPI:
    app = FastAPI(title="visioblend")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = JobStore(retention_s=retention_s, clock=clock)
    jobs: queue.Queue = queue.Queue()
    app.state.store = store

    def worker_loop() -> None:
        while True:
            job_id, spec = jobs.get()
            _run_job(bundle, store, job_id, spec)
            jobs.task_done()

    if bundle is not None:
        for _ in range(max(1, workers)):
            threading.Thread(target=worker_loop, daemon=True).start()

    @app.post("/api/v1/generate")
    async def generate(request: Request):
        store.evict_expired()
        if bundle is None:
            return JSONResponse({"error": "no model loaded"}, status_code=503)
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            return JSONResponse(
                {"error": f"payload too large (limit {MAX_BODY_BYTES} bytes)"}, status_code=400
            )
        try:
            payload = json.loads(body) if body else {}
        except json.JSONDecodeError:
            return JSONResponse({"error": "malformed JSON body"}, status_code=400)
        if not isinstance(payload, dict):
            return JSONResponse({"error": "request body must be a JSON object"}, status_code=400)
        try:
            spec = _parse_generate(payload, bundle)
        except _RequestError as e:
            return e.response()
        rec = store.create()
        jobs.put((rec.job_id, spec))
        return JSONResponse({"job_id": rec.job_id}, status_code=202)

    @app.get("/api/v1/jobs/{job_id}")
    def poll(job_id: str):
        store.evict_expired()
        rec = store.get(job_id)
        if rec is None:
            return JSONResponse({"error": "unknown job id"}, status_code=404)
        return JSONResponse(rec.to_json())

    @app.get("/api/v1/models")
    def models():
        if bundle is None:
            return JSONResponse({"models": []})
        return JSONResponse(
            {
                "models": [
                    {
                        "id": bundle.model_id,
                        "height": bundle.height,
                        "width": bundle.width,
                        "steps": bundle.sched.T,
                    }
                ]
            }
        )

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
