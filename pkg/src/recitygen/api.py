"""REST surface binding sessions, backends, and the feedback store.

Every non-2xx response body is an ApiError object: {"http_status", "code",
"message"} with the code drawn from the closed set in ERROR_CODES below.
GET endpoints are side-effect-free. Generation is asynchronous: submitting
returns 202 with a job id to poll.
"""

from __future__ import annotations

import logging
import socket
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

import uvicorn
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import backends, pipeline, segmentation, store as store_mod
from .backends import BackendKind, BackendRef, Gateway
from .images import BadImage, ImageTooLarge
from .masks import rle_encode
from .pipeline import JobQueue, MaskSession, SessionManager
from .segmentation import ClickPoint, Polarity
from .store import (
    GeoPoint,
    QUESTION_KEYS,
    QuestionnaireResponse,
    Rating,
    Store,
)

logger = logging.getLogger(__name__)

DEFAULT_PORT = 8000
DEFAULT_MAX_UPLOAD = 16 * 1024 * 1024

ENV_PORT = "RECITYGEN_PORT"
ENV_DATA_DIR = "RECITYGEN_DATA_DIR"
ENV_SEGMENTER = "RECITYGEN_SEGMENTER"
ENV_INPAINTER = "RECITYGEN_INPAINTER"
ENV_WORKERS = "RECITYGEN_WORKERS"


class ServeError(Exception):
    pass


class PortInUse(ServeError):
    pass


class StoreOpenFailure(ServeError):
    pass


@dataclass
class ServiceConfig:
    data_dir: str | Path = "./recitygen-data"
    port: int = DEFAULT_PORT
    host: str = "127.0.0.1"
    segmenter: BackendRef = field(default_factory=lambda: BackendRef(BackendKind.MOCK))
    inpainter: BackendRef = field(default_factory=lambda: BackendRef(BackendKind.MOCK))
    worker_count: int = 2
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD
    session_ttl_minutes: float = 120.0
    cors_origins: tuple[str, ...] = ("*",)

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of 1..65535")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")


@dataclass(frozen=True)
class ApiError:
    http_status: int
    code: str
    message: str

    def response(self) -> JSONResponse:
        return JSONResponse(
            status_code=self.http_status,
            content={"http_status": self.http_status, "code": self.code, "message": self.message},
        )


# Closed set of machine codes: exception class -> (http status, code).
ERROR_CODES: list[tuple[type[Exception], int, str]] = [
    (store_mod.InvalidGeo, 400, "invalid_geo"),
    (store_mod.InvalidBox, 400, "invalid_box"),
    (store_mod.ScoreOutOfRange, 400, "score_out_of_range"),
    (store_mod.InvalidField, 400, "invalid_field"),
    (store_mod.UnknownReference, 404, "unknown_reference"),
    (store_mod.CorruptLog, 500, "io_error"),
    (store_mod.IoError, 500, "io_error"),
    (BadImage, 400, "bad_image"),
    (ImageTooLarge, 413, "too_large"),
    (segmentation.ClickOutOfBounds, 400, "out_of_bounds"),
    (segmentation.NoIncludeClick, 400, "no_include_click"),
    (segmentation.IncludeInsideBarrier, 400, "include_inside_barrier"),
    (pipeline.UnknownSession, 404, "unknown_session"),
    (pipeline.UnknownJob, 404, "unknown_job"),
    (pipeline.FirstClickMustInclude, 400, "first_click_must_include"),
    (pipeline.ClickLimitExceeded, 400, "too_many_clicks"),
    (pipeline.NothingToUndo, 409, "nothing_to_undo"),
    (pipeline.CandidateIndexOutOfRange, 400, "index_out_of_range"),
    (pipeline.NoMask, 400, "no_mask"),
    (pipeline.PromptEmpty, 400, "prompt_empty"),
    (pipeline.PromptTooLong, 400, "prompt_too_long"),
    (backends.InvalidRequest, 400, "invalid_request"),
    (backends.BackendTimeout, 504, "backend_timeout"),
    (backends.BackendUnreachable, 502, "backend_unreachable"),
    (backends.ProtocolError, 502, "protocol_error"),
]


def _map_exception(exc: Exception) -> ApiError:
    for klass, status, code in ERROR_CODES:
        if isinstance(exc, klass):
            return ApiError(http_status=status, code=code, message=str(exc))
    logger.exception("unhandled error", exc_info=exc)
    return ApiError(http_status=500, code="internal_error", message="internal error")


class ClickBody(BaseModel):
    x: int
    y: int
    polarity: str


class SelectBody(BaseModel):
    index: int


class GenerateBody(BaseModel):
    prompt: str
    seed: int | None = None
    num_variants: int = 3


class RatingBody(BaseModel):
    score: int


class QuestionnaireBody(BaseModel):
    q1: int
    q2: int
    q3: int
    q4: int
    q5: int
    q6: int
    q7: int
    gender: str = ""
    education: str = ""
    birth_year: str = ""
    profession: str = ""
    design_background: str = ""
    open_feedback: str = ""


def _entry_view(entry: store_mod.FeedbackEntry) -> dict:
    return {
        "entry_id": entry.id,
        "lat": entry.geo.lat,
        "lon": entry.geo.lon,
        "image_ref": entry.image_ref,
        "created_at": entry.created_at,
        "note": entry.note,
    }


def _variant_view(variant: store_mod.GeneratedVariant) -> dict:
    return {
        "variant_id": variant.variant_id,
        "job_id": variant.job_id,
        "entry_id": variant.entry_id,
        "image_ref": variant.image_ref,
        "prompt": variant.prompt,
        "seed": variant.seed,
        "backend_id": variant.backend_id,
        "created_at": variant.created_at,
    }


def _session_view(session: MaskSession) -> dict:
    return {
        "session_id": session.session_id,
        "entry_id": session.entry_id,
        "image_ref": session.image_ref,
        "clicks": [
            {"x": c.x, "y": c.y, "polarity": c.polarity.value} for c in session.clicks
        ],
        "candidates": [
            {
                "rle": rle_encode(c.mask),
                "width": c.mask.width,
                "height": c.mask.height,
                "score": c.score,
            }
            for c in session.candidates
        ],
        "selected": session.selected,
    }


def _job_view(job: pipeline.GenerationJob) -> dict:
    return {
        "job_id": job.job_id,
        "session_id": job.session_id,
        "state": job.state,
        "reason": job.reason,
        "variant_ids": list(job.variant_ids),
        "prompt": job.prompt,
        "seed": job.seed,
        "num_variants": job.num_variants,
        "created_at": job.created_at,
        "finished_at": job.finished_at,
    }


def _parse_polarity(raw: str) -> Polarity:
    try:
        return Polarity(raw.lower())
    except ValueError:
        raise backends.InvalidRequest(
            f"polarity must be 'include' or 'exclude', got {raw!r}"
        ) from None


def create_app(
    config: ServiceConfig,
    store: Store | None = None,
    gateway: Gateway | None = None,
) -> FastAPI:
    """Build the service. A store or gateway passed in (tests) is used as-is;
    otherwise they are created from the config."""
    owns_store = store is None
    if store is None:
        store = Store(config.data_dir)
    if gateway is None:
        gateway = Gateway(segmenter=config.segmenter, inpainter=config.inpainter)
    manager = SessionManager(store, gateway, ttl_minutes=config.session_ttl_minutes)
    jobs = JobQueue(store, gateway, manager, worker_count=config.worker_count)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        jobs.shutdown()
        if owns_store:
            store.close()

    app = FastAPI(title="recitygen", lifespan=lifespan)
    app.state.store = store
    app.state.gateway = gateway
    app.state.sessions = manager
    app.state.jobs = jobs
    app.state.config = config

    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(Exception)
    async def on_error(_: Request, exc: Exception) -> JSONResponse:
        return _map_exception(exc).response()

    @app.exception_handler(_ApiException)
    async def on_api_exception(_: Request, exc: _ApiException) -> JSONResponse:
        return exc.error.response()

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(_: Request, exc: RequestValidationError) -> JSONResponse:
        return ApiError(400, "invalid_request", str(exc.errors())).response()

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(_: Request, exc: StarletteHTTPException) -> JSONResponse:
        code = {404: "not_found", 405: "method_not_allowed", 413: "too_large"}.get(
            exc.status_code, f"http_{exc.status_code}"
        )
        return ApiError(exc.status_code, code, str(exc.detail)).response()

    @app.middleware("http")
    async def reject_oversized(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and length.isdigit() and int(length) > config.max_upload_bytes:
            return ApiError(413, "too_large", "request body exceeds upload limit").response()
        return await call_next(request)

    # ----------------------------------------------------------- health

    @app.get("/api/health")
    def health() -> dict:
        statuses = gateway.health()
        return {
            "status": "ok",
            "segmenter": {"status": statuses["segmenter"].status, "detail": statuses["segmenter"].detail},
            "inpainter": {"status": statuses["inpainter"].status, "detail": statuses["inpainter"].detail},
        }

    # ----------------------------------------------------------- entries

    @app.post("/api/entries", status_code=201)
    def create_entry(
        lat: float = Form(...),
        lon: float = Form(...),
        note: str | None = Form(None),
        image: UploadFile = File(...),
    ) -> dict:
        data = image.file.read(config.max_upload_bytes + 1)
        if len(data) > config.max_upload_bytes:
            raise ImageTooLarge("upload exceeds max_upload_bytes")
        entry = store.create_entry(GeoPoint(lat, lon), data, note=note)
        return {"entry_id": entry.id}

    @app.get("/api/entries")
    def list_entries(bbox: str | None = None) -> dict:
        if bbox is None:
            entries = store.query_bbox(-90.0, -180.0, 90.0, 180.0)
        else:
            parts = bbox.split(",")
            if len(parts) != 4:
                raise store_mod.InvalidBox("bbox must be min_lat,min_lon,max_lat,max_lon")
            try:
                min_lat, min_lon, max_lat, max_lon = (float(p) for p in parts)
            except ValueError:
                raise store_mod.InvalidBox(f"bbox has non-numeric bound: {bbox!r}") from None
            entries = store.query_bbox(min_lat, min_lon, max_lat, max_lon)
        return {"entries": [_entry_view(e) for e in entries]}

    @app.get("/api/entries/{entry_id}")
    def get_entry(entry_id: str) -> dict:
        try:
            entry = store.get_entry(entry_id)
        except store_mod.UnknownReference as exc:
            raise _unknown("unknown_entry", str(exc))
        variants = store.variants_for_entry(entry_id)
        return {"entry": _entry_view(entry), "variants": [_variant_view(v) for v in variants]}

    # ---------------------------------------------------------- sessions

    @app.post("/api/entries/{entry_id}/sessions", status_code=201)
    def create_session(entry_id: str) -> dict:
        try:
            session = manager.new_session(entry_id)
        except store_mod.UnknownReference as exc:
            raise _unknown("unknown_entry", str(exc))
        return {"session_id": session.session_id}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return _session_view(manager.get(session_id))

    @app.post("/api/sessions/{session_id}/clicks")
    def add_click(session_id: str, body: ClickBody) -> dict:
        click = ClickPoint(x=body.x, y=body.y, polarity=_parse_polarity(body.polarity))
        return _session_view(manager.add_click(session_id, click))

    @app.post("/api/sessions/{session_id}/undo")
    def undo(session_id: str) -> dict:
        return _session_view(manager.undo_click(session_id))

    @app.post("/api/sessions/{session_id}/select")
    def select(session_id: str, body: SelectBody) -> dict:
        return _session_view(manager.select_candidate(session_id, body.index))

    # -------------------------------------------------------- generation

    @app.post("/api/sessions/{session_id}/generate", status_code=202)
    def generate(session_id: str, body: GenerateBody) -> dict:
        job = jobs.submit(
            session_id,
            prompt=body.prompt,
            seed=body.seed,
            num_variants=body.num_variants,
        )
        return {"job_id": job.job_id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        return _job_view(jobs.poll(job_id))

    @app.get("/api/variants/{variant_id}/image")
    def variant_image(variant_id: str) -> Response:
        try:
            variant = store.get_variant(variant_id)
        except store_mod.UnknownReference as exc:
            raise _unknown("unknown_variant", str(exc))
        return Response(content=store.get_blob(variant.image_ref), media_type="image/png")

    @app.post("/api/variants/{variant_id}/rating", status_code=201)
    def rate(variant_id: str, body: RatingBody) -> dict:
        rating = Rating(variant_id=variant_id, score=body.score, created_at=store_mod._now_ms())
        try:
            store.save_rating(rating)
        except store_mod.UnknownReference as exc:
            raise _unknown("unknown_variant", str(exc))
        return {"variant_id": rating.variant_id, "score": rating.score, "created_at": rating.created_at}

    @app.post("/api/entries/{entry_id}/questionnaire", status_code=201)
    def questionnaire(entry_id: str, body: QuestionnaireBody) -> dict:
        response = QuestionnaireResponse(
            entry_id=entry_id,
            **{key: getattr(body, key) for key in QUESTION_KEYS},
            gender=body.gender,
            education=body.education,
            birth_year=body.birth_year,
            profession=body.profession,
            design_background=body.design_background,
            open_feedback=body.open_feedback,
        )
        try:
            saved = store.save_questionnaire(response)
        except store_mod.UnknownReference as exc:
            raise _unknown("unknown_entry", str(exc))
        return {"entry_id": saved.entry_id, "created_at": saved.created_at}

    @app.get("/api/stats")
    def stats() -> dict:
        aggregate = store.aggregate_stats()
        return {
            "questions": {k: {str(s): n for s, n in hist.items()} for k, hist in aggregate.questions.items()},
            "ratings": {str(s): n for s, n in aggregate.ratings.items()},
            "response_count": aggregate.response_count,
            "rating_count": aggregate.rating_count,
        }

    return app


class _ApiException(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.error = ApiError(status, code, message)


def _unknown(code: str, message: str) -> _ApiException:
    return _ApiException(404, code, message)


def serve(config: ServiceConfig) -> None:
    """Run the service until a shutdown signal; drains running jobs on exit."""
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((config.host, config.port))
    except OSError as exc:
        raise PortInUse(f"cannot bind {config.host}:{config.port}: {exc}") from exc
    finally:
        probe.close()

    try:
        store = Store(config.data_dir)
    except store_mod.StoreError as exc:
        raise StoreOpenFailure(str(exc)) from exc

    app = create_app(config, store=store)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    finally:
        store.close()
