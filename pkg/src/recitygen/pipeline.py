"""Interactive mask sessions and asynchronous generation jobs.

Sessions are immutable snapshots managed per id: every mutation builds a new
snapshot, so a failed backend call leaves the stored state untouched and undo
is an exact restore. Jobs run on a bounded worker pool; a job's inputs (image
and selected mask) are captured at submit time, so later clicks never affect
a queued job. Workers never mutate sessions.
"""

from __future__ import annotations

import logging
import queue
import secrets
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from . import backends
from .images import ImageBuffer, decode_png, encode_png
from .masks import BinaryMask, dilate, feather
from .segmentation import ClickOutOfBounds, ClickPoint, MaskCandidate, Polarity
from .store import GeneratedVariant, Store

logger = logging.getLogger(__name__)

MAX_CLICKS = 64
DEFAULT_DILATE_K = 2
DEFAULT_FEATHER_RADIUS = 4
DEFAULT_SESSION_TTL_MINUTES = 120


class PipelineError(Exception):
    pass


class UnknownSession(PipelineError):
    pass


class UnknownJob(PipelineError):
    pass


class FirstClickMustInclude(PipelineError):
    pass


class ClickLimitExceeded(PipelineError):
    pass


class NothingToUndo(PipelineError):
    pass


class CandidateIndexOutOfRange(PipelineError):
    pass


class NoMask(PipelineError):
    pass


class PromptEmpty(PipelineError):
    pass


class PromptTooLong(PipelineError):
    pass


@dataclass(frozen=True)
class Snapshot:
    clicks: tuple[ClickPoint, ...]
    candidates: tuple[MaskCandidate, ...]
    selected: int


@dataclass(frozen=True)
class MaskSession:
    session_id: str
    entry_id: str
    image_ref: str
    clicks: tuple[ClickPoint, ...] = ()
    candidates: tuple[MaskCandidate, ...] = ()
    selected: int = 0
    history: tuple[Snapshot, ...] = ()

    def snapshot(self) -> Snapshot:
        return Snapshot(clicks=self.clicks, candidates=self.candidates, selected=self.selected)


class JobState:
    QUEUED = "queued"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"

    TERMINAL = (SUCCEEDED, FAILED)


@dataclass(frozen=True)
class GenerationJob:
    """Read-only view of a job; poll() returns a fresh one each call."""

    job_id: str
    session_id: str
    prompt: str
    seed: int
    num_variants: int
    state: str
    reason: str | None = None
    variant_ids: tuple[str, ...] = ()
    created_at: int = 0
    finished_at: int | None = None


@dataclass
class _JobRecord:
    job_id: str
    session_id: str
    entry_id: str
    prompt: str
    seed: int
    num_variants: int
    image: ImageBuffer
    mask: BinaryMask
    dilate_k: int
    feather_radius: int
    state: str = JobState.QUEUED
    reason: str | None = None
    variant_ids: tuple[str, ...] = ()
    created_at: int = 0
    finished_at: int | None = None

    def view(self) -> GenerationJob:
        return GenerationJob(
            job_id=self.job_id,
            session_id=self.session_id,
            prompt=self.prompt,
            seed=self.seed,
            num_variants=self.num_variants,
            state=self.state,
            reason=self.reason,
            variant_ids=self.variant_ids,
            created_at=self.created_at,
            finished_at=self.finished_at,
        )


def _now_ms() -> int:
    return int(datetime.now(timezone.utc).timestamp() * 1000)


def _validate_prompt(prompt: str) -> str:
    prompt = prompt.strip()
    if not prompt:
        raise PromptEmpty("prompt is empty")
    if len(prompt) > backends.MAX_PROMPT_CHARS:
        raise PromptTooLong(f"prompt exceeds {backends.MAX_PROMPT_CHARS} characters")
    return prompt


def _validate_generation_args(seed: int | None, num_variants: int) -> None:
    if seed is not None and not 0 <= seed <= backends.UINT64_MASK:
        raise backends.InvalidRequest("seed must fit in 64 bits")
    if not 1 <= num_variants <= backends.MAX_VARIANTS:
        raise backends.InvalidRequest(f"num_variants must be 1..{backends.MAX_VARIANTS}")


class SessionManager:
    """Holds live sessions; mutations are serialized per session id."""

    def __init__(
        self,
        store: Store,
        gateway: backends.Gateway,
        ttl_minutes: float = DEFAULT_SESSION_TTL_MINUTES,
        max_clicks: int = MAX_CLICKS,
    ):
        self._store = store
        self._gateway = gateway
        self._ttl_s = ttl_minutes * 60.0
        self._max_clicks = max_clicks
        self._lock = threading.Lock()
        self._sessions: dict[str, MaskSession] = {}
        self._images: dict[str, ImageBuffer] = {}
        self._touched: dict[str, float] = {}
        self._session_locks: dict[str, threading.Lock] = {}

    def new_session(self, entry_id: str) -> MaskSession:
        entry = self._store.get_entry(entry_id)  # UnknownReference if missing
        image = decode_png(self._store.get_blob(entry.image_ref))
        session = MaskSession(
            session_id=self._store.new_id(),
            entry_id=entry.id,
            image_ref=entry.image_ref,
        )
        with self._lock:
            self._evict_expired()
            self._sessions[session.session_id] = session
            self._images[session.session_id] = image
            self._touched[session.session_id] = time.monotonic()
            self._session_locks[session.session_id] = threading.Lock()
        return session

    def get(self, session_id: str) -> MaskSession:
        with self._lock:
            self._evict_expired()
            session = self._sessions.get(session_id)
            if session is None:
                raise UnknownSession(f"no session {session_id}")
            self._touched[session_id] = time.monotonic()
            return session

    def image_for(self, session_id: str) -> ImageBuffer:
        with self._lock:
            image = self._images.get(session_id)
            if image is None:
                raise UnknownSession(f"no session {session_id}")
            return image

    def _evict_expired(self) -> None:
        now = time.monotonic()
        expired = [sid for sid, ts in self._touched.items() if now - ts > self._ttl_s]
        for sid in expired:
            self._sessions.pop(sid, None)
            self._images.pop(sid, None)
            self._touched.pop(sid, None)
            self._session_locks.pop(sid, None)

    def _mutate_lock(self, session_id: str) -> threading.Lock:
        with self._lock:
            lock = self._session_locks.get(session_id)
            if lock is None:
                raise UnknownSession(f"no session {session_id}")
            return lock

    def _commit(self, session: MaskSession) -> MaskSession:
        with self._lock:
            self._sessions[session.session_id] = session
            self._touched[session.session_id] = time.monotonic()
        return session

    def add_click(self, session_id: str, click: ClickPoint) -> MaskSession:
        """Append a click and recompute candidates with the full click set.
        On any backend failure the session is left exactly as it was."""
        with self._mutate_lock(session_id):
            session = self.get(session_id)
            image = self.image_for(session_id)
            if not (0 <= click.x < image.width and 0 <= click.y < image.height):
                raise ClickOutOfBounds(
                    f"click ({click.x},{click.y}) outside {image.width}x{image.height}"
                )
            if not session.clicks and click.polarity is not Polarity.INCLUDE:
                raise FirstClickMustInclude("the first click must be an include click")
            if len(session.clicks) >= self._max_clicks:
                raise ClickLimitExceeded(f"session holds the maximum of {self._max_clicks} clicks")

            clicks = session.clicks + (click,)
            candidates = tuple(self._gateway.segment(image, list(clicks)))
            updated = replace(
                session,
                clicks=clicks,
                candidates=candidates,
                selected=0,
                history=session.history + (session.snapshot(),),
            )
            return self._commit(updated)

    def undo_click(self, session_id: str) -> MaskSession:
        with self._mutate_lock(session_id):
            session = self.get(session_id)
            if not session.history:
                raise NothingToUndo("session has no prior state")
            snap = session.history[-1]
            restored = replace(
                session,
                clicks=snap.clicks,
                candidates=snap.candidates,
                selected=snap.selected,
                history=session.history[:-1],
            )
            return self._commit(restored)

    def select_candidate(self, session_id: str, index: int) -> MaskSession:
        with self._mutate_lock(session_id):
            session = self.get(session_id)
            if not 0 <= index < len(session.candidates):
                raise CandidateIndexOutOfRange(
                    f"index {index} out of range for {len(session.candidates)} candidates"
                )
            return self._commit(replace(session, selected=index))


class JobQueue:
    """Bounded worker pool executing generation jobs. Enqueue never blocks;
    observable job states only ever move queued -> running -> terminal."""

    def __init__(
        self,
        store: Store,
        gateway: backends.Gateway,
        manager: SessionManager,
        worker_count: int = 2,
    ):
        if worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        self._store = store
        self._gateway = gateway
        self._manager = manager
        self._lock = threading.Lock()
        self._jobs: dict[str, _JobRecord] = {}
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._shutdown = False
        self._workers = [
            threading.Thread(target=self._worker_loop, name=f"job-worker-{i}", daemon=True)
            for i in range(worker_count)
        ]
        for worker in self._workers:
            worker.start()

    def submit(
        self,
        session_id: str,
        prompt: str,
        seed: int | None = None,
        num_variants: int = 3,
        feather_radius: int = DEFAULT_FEATHER_RADIUS,
        dilate_k: int = DEFAULT_DILATE_K,
    ) -> GenerationJob:
        """Enqueue generation for the session's selected candidate. A missing
        seed is drawn once here and recorded on the job, so every result can
        be replayed."""
        session = self._manager.get(session_id)
        prompt = _validate_prompt(prompt)
        _validate_generation_args(seed, num_variants)
        if not session.candidates:
            raise NoMask("session has no mask candidates yet")
        if seed is None:
            seed = secrets.randbits(64)
        image = self._manager.image_for(session_id)
        record = _JobRecord(
            job_id=self._store.new_id(),
            session_id=session_id,
            entry_id=session.entry_id,
            prompt=prompt,
            seed=seed,
            num_variants=num_variants,
            image=image,
            mask=session.candidates[session.selected].mask,
            dilate_k=dilate_k,
            feather_radius=feather_radius,
            created_at=_now_ms(),
        )
        with self._lock:
            if self._shutdown:
                record.state = JobState.FAILED
                record.reason = "shutdown"
                record.finished_at = _now_ms()
                self._jobs[record.job_id] = record
                return record.view()
            self._jobs[record.job_id] = record
        self._queue.put(record.job_id)
        return record.view()

    def submit_direct(
        self,
        entry_id: str,
        image: ImageBuffer,
        mask: BinaryMask,
        prompt: str,
        seed: int | None = None,
        num_variants: int = 3,
        feather_radius: int = DEFAULT_FEATHER_RADIUS,
        dilate_k: int = DEFAULT_DILATE_K,
    ) -> GenerationJob:
        """Session-less enqueue used by the batch/audit path."""
        prompt = _validate_prompt(prompt)
        _validate_generation_args(seed, num_variants)
        if seed is None:
            seed = secrets.randbits(64)
        record = _JobRecord(
            job_id=self._store.new_id(),
            session_id="",
            entry_id=entry_id,
            prompt=prompt,
            seed=seed,
            num_variants=num_variants,
            image=image,
            mask=mask,
            dilate_k=dilate_k,
            feather_radius=feather_radius,
            created_at=_now_ms(),
        )
        with self._lock:
            if self._shutdown:
                record.state = JobState.FAILED
                record.reason = "shutdown"
                record.finished_at = _now_ms()
                self._jobs[record.job_id] = record
                return record.view()
            self._jobs[record.job_id] = record
        self._queue.put(record.job_id)
        return record.view()

    def poll(self, job_id: str) -> GenerationJob:
        with self._lock:
            record = self._jobs.get(job_id)
            if record is None:
                raise UnknownJob(f"no job {job_id}")
            return record.view()

    def wait(self, job_id: str, timeout_s: float = 30.0) -> GenerationJob:
        """Poll until the job reaches a terminal state (test/CLI helper)."""
        deadline = time.monotonic() + timeout_s
        while True:
            job = self.poll(job_id)
            if job.state in JobState.TERMINAL:
                return job
            if time.monotonic() > deadline:
                raise TimeoutError(f"job {job_id} still {job.state} after {timeout_s}s")
            time.sleep(0.01)

    def _worker_loop(self) -> None:
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            with self._lock:
                record = self._jobs.get(job_id)
                if record is None or record.state != JobState.QUEUED:
                    continue  # failed at shutdown before a worker picked it up
                record.state = JobState.RUNNING
            try:
                variant_ids = self._run(record)
                with self._lock:
                    record.variant_ids = variant_ids
                    record.state = JobState.SUCCEEDED
                    record.finished_at = _now_ms()
            except Exception as exc:  # any failure is a terminal job state
                logger.warning("job %s failed: %s", job_id, exc)
                with self._lock:
                    record.state = JobState.FAILED
                    record.reason = str(exc)
                    record.finished_at = _now_ms()

    def _run(self, record: _JobRecord) -> tuple[str, ...]:
        mask = dilate(record.mask, record.dilate_k)
        alpha = feather(mask, record.feather_radius)
        request = backends.InpaintRequest(
            image=record.image,
            alpha=alpha,
            prompt=record.prompt,
            seed=record.seed,
            num_variants=record.num_variants,
        )
        result = self._gateway.inpaint(request)
        variant_ids = []
        for variant_image in result.variants:
            png = encode_png(variant_image)
            ref = self._store.put_blob(png)
            variant = GeneratedVariant(
                variant_id=self._store.new_id(),
                job_id=record.job_id,
                entry_id=record.entry_id,
                image_ref=ref,
                prompt=record.prompt,
                seed=record.seed,
                backend_id=result.backend_id,
                created_at=_now_ms(),
            )
            self._store.save_variant(variant)
            variant_ids.append(variant.variant_id)
        return tuple(variant_ids)

    def running_count(self) -> int:
        with self._lock:
            return sum(1 for r in self._jobs.values() if r.state == JobState.RUNNING)

    def shutdown(self, timeout_s: float = 30.0) -> None:
        """Drain: running jobs finish, still-queued jobs fail with 'shutdown'."""
        with self._lock:
            if self._shutdown:
                return
            self._shutdown = True
            now = _now_ms()
            for record in self._jobs.values():
                if record.state == JobState.QUEUED:
                    record.state = JobState.FAILED
                    record.reason = "shutdown"
                    record.finished_at = now
        for _ in self._workers:
            self._queue.put(None)
        deadline = time.monotonic() + timeout_s
        for worker in self._workers:
            worker.join(max(0.0, deadline - time.monotonic()))
